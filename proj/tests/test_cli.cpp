#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "drfk/checkpoint.hpp"
#include "drfk/image_io.hpp"
#include "drfk/metrics.hpp"

using namespace drfk;

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int code = -1;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " + DRFK_BIN_PATH + " " + args + " 2>&1";
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  RunResult r;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, p)) > 0)
    r.output.append(buf, got);
  const int st = ::pclose(p);
  r.code = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

struct TmpDir {
  fs::path dir;
  TmpDir() {
    dir = fs::temp_directory_path() /
          ("drfk_cli_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~TmpDir() { fs::remove_all(dir); }
  std::string operator/(const std::string& name) const {
    return (dir / name).string();
  }
};

const char* kMicroIni =
    "[network]\n"
    "levels = 2\nblocks = 1\nbase_channels = 4\nseed = 11\n"
    "[train]\n"
    "patch = 32\nbatch = 2\nsteps = 4\nseed = 5\n"
    "[data]\n"
    "count = 2\nheight = 64\nwidth = 64\nseed = 21\n";

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
  CHECK(run("").code == 2);
  CHECK(run("--help").code == 0);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("train --out x.drfk").code == 2);  // missing --config

  TmpDir tmp;
  write_file_atomic(tmp / "bad.ini", "[network]\nblokcs = 4\n");
  RunResult r = run("count --config " + (tmp / "bad.ini"));
  CHECK(r.code == 2);
  CHECK(r.output.find("did you mean \"blocks\"") != std::string::npos);

  CHECK(run("count --config " + (tmp / "nonexistent.ini")).code == 2);
  CHECK(run("count --config " + (tmp / "bad.ini"), "DRFK_THREADS=zebra").code ==
        2);
}

TEST_CASE("count reports the frozen micro numbers") {
  TmpDir tmp;
  write_file_atomic(tmp / "m.ini", kMicroIni);
  RunResult r = run("count --config " + (tmp / "m.ini"), "DRFK_THREADS=1");
  REQUIRE(r.code == 0);
  CHECK(r.output.find("params 6243\n") != std::string::npos);
  CHECK(r.output.find("params_training 12561\n") != std::string::npos);
  CHECK(r.output.find("convention macs\n") != std::string::npos);
  CHECK(r.output.find("layer eb0.entry ") != std::string::npos);
}

TEST_CASE("gen-data materializes reproducible pairs") {
  TmpDir tmp;
  std::string ini = kMicroIni;
  ini += "\n[infer]\n# defaults\n";
  write_file_atomic(tmp / "m.ini", ini);
  REQUIRE(run("gen-data --config " + (tmp / "m.ini") + " --out " +
              (tmp / "pairs"))
              .code == 0);
  for (const char* f : {"sharp_0.ppm", "blurry_0.ppm", "sharp_1.ppm",
                        "blurry_1.ppm", "manifest.csv"})
    REQUIRE(fs::exists(fs::path(tmp / "pairs") / f));
  const std::string manifest = read_file(tmp / "pairs/manifest.csv");
  REQUIRE(count_lines(manifest) == 3);  // header + one row per pair

  SECTION("a rerun writes bit-identical files") {
    const std::string before = read_file(tmp / "pairs/blurry_1.ppm");
    REQUIRE(run("gen-data --config " + (tmp / "m.ini") + " --out " +
                (tmp / "pairs"))
                .code == 0);
    REQUIRE(read_file(tmp / "pairs/blurry_1.ppm") == before);
    REQUIRE(read_file(tmp / "pairs/manifest.csv") == manifest);
  }
  SECTION("manifest seeds regenerate the sharp images") {
    std::istringstream in(manifest);
    std::string line;
    std::getline(in, line);  // header
    for (int i = 0; i < 2; ++i) {
      REQUIRE(std::getline(in, line).good());
      const std::size_t c1 = line.find(',');
      const std::size_t c2 = line.find(',', c1 + 1);
      const std::uint64_t seed =
          std::stoull(line.substr(c1 + 1, c2 - c1 - 1));
      Tensor<float> want = map(gen_scene<float>(seed, 64, 64), [](float v) {
        return dequantize8(quantize8(v));
      });
      REQUIRE(read_ppm(tmp / ("pairs/sharp_" + std::to_string(i) + ".ppm")) ==
              want);
    }
  }
}

TEST_CASE("train writes checkpoints and logs") {
  TmpDir tmp;
  write_file_atomic(tmp / "m.ini", kMicroIni);

  SECTION("zero steps equals a locally built fresh checkpoint") {
    std::string ini = kMicroIni;
    ini += "[infer]\n";  // exercise empty trailing section
    write_file_atomic(tmp / "z.ini", ini);
    // rewrite steps
    Config cfg = parse_config(ini);
    cfg.train.steps = 0;
    write_file_atomic(tmp / "z.ini", serialize_config(cfg));
    REQUIRE(run("train --config " + (tmp / "z.ini") + " --out " +
                (tmp / "z.drfk"))
                .code == 0);
    TrainState<float> fresh{Model<float>::build(cfg.network), {}, 0};
    REQUIRE(read_file(tmp / "z.drfk") == checkpoint_bytes(cfg, fresh));
    const std::string csv = read_file(tmp / "z.loss.csv");
    REQUIRE(csv == "step,loss,lr\n");
  }
  SECTION("loss csv has one row per step") {
    REQUIRE(run("train --config " + (tmp / "m.ini") + " --out " +
                (tmp / "m.drfk"))
                .code == 0);
    REQUIRE(count_lines(read_file(tmp / "m.loss.csv")) == 5);
  }
  SECTION("huge learning rates abort with exit 3") {
    Config cfg = parse_config(kMicroIni);
    cfg.train.lr_max = 1e8;
    cfg.train.lr_min = 1e8;
    cfg.train.steps = 10;
    write_file_atomic(tmp / "boom.ini", serialize_config(cfg));
    RunResult r = run("train --config " + (tmp / "boom.ini") + " --out " +
                      (tmp / "boom.drfk"));
    REQUIRE(r.code == 3);
    REQUIRE(r.output.find("numeric error") != std::string::npos);
  }
}

TEST_CASE("resume reproduces the uninterrupted run bit for bit") {
  TmpDir tmp;
  Config cfg = parse_config(kMicroIni);
  cfg.train.steps = 6;
  cfg.train.save_every = 3;
  write_file_atomic(tmp / "r.ini", serialize_config(cfg));

  REQUIRE(run("train --config " + (tmp / "r.ini") + " --out " +
              (tmp / "a.drfk"))
              .code == 0);
  REQUIRE(fs::exists(tmp / "a.drfk.step3"));

  REQUIRE(run("train --config " + (tmp / "r.ini") + " --out " +
              (tmp / "b.drfk") + " --resume " + (tmp / "a.drfk.step3"))
              .code == 0);
  REQUIRE(read_file(tmp / "a.drfk") == read_file(tmp / "b.drfk"));

  // the resumed log must continue exactly where the full run's log was
  const std::string full = read_file(tmp / "a.loss.csv");
  const std::string part = read_file(tmp / "b.loss.csv");
  const std::size_t row3 = full.find("\n3,");
  REQUIRE(row3 != std::string::npos);
  REQUIRE(part == "step,loss,lr" + full.substr(row3));

  SECTION("resume against a different architecture is refused") {
    Config other = cfg;
    other.network.base_channels = 8;
    write_file_atomic(tmp / "o.ini", serialize_config(other));
    RunResult r = run("train --config " + (tmp / "o.ini") + " --out " +
                      (tmp / "c.drfk") + " --resume " + (tmp / "a.drfk.step3"));
    REQUIRE(r.code == 2);
    REQUIRE(r.output.find("disagrees") != std::string::npos);
  }
}

TEST_CASE("infer restores images through checkpoints") {
  TmpDir tmp;
  Config cfg = parse_config(kMicroIni);
  cfg.data.count = 1;
  cfg.data.height = 256;
  cfg.data.width = 256;
  write_file_atomic(tmp / "big.ini", serialize_config(cfg));
  REQUIRE(run("gen-data --config " + (tmp / "big.ini") + " --out " +
              (tmp / "pairs"))
              .code == 0);
  const std::string blurry = tmp / "pairs/blurry_0.ppm";

  SECTION("a zero-head checkpoint is the 8-bit identity") {
    TrainState<float> fresh{Model<float>::build(cfg.network), {}, 0};
    save_checkpoint(tmp / "id.drfk", cfg, fresh);
    REQUIRE(run("infer --ckpt " + (tmp / "id.drfk") + " --in " + blurry +
                " --out " + (tmp / "out.ppm"))
                .code == 0);
    REQUIRE(read_file(tmp / "out.ppm") == read_file(blurry));
  }
  SECTION("tiled and direct inference agree at the window size") {
    TrainState<float> st{Model<float>::build(cfg.network), {}, 0};
    Rng rng(3);
    Tensor<float>& hw = st.model.param("db0.head.wq");
    for (std::size_t i = 0; i < hw.numel(); ++i)
      hw[i] = float(0.1 * (2 * rng.uniform() - 1));
    save_checkpoint(tmp / "t.drfk", cfg, st);
    REQUIRE(run("infer --ckpt " + (tmp / "t.drfk") + " --in " + blurry +
                " --out " + (tmp / "direct.ppm"))
                .code == 0);
    REQUIRE(run("infer --ckpt " + (tmp / "t.drfk") + " --in " + blurry +
                " --out " + (tmp / "tiled.ppm") + " --tile")
                .code == 0);
    REQUIRE(read_file(tmp / "direct.ppm") == read_file(tmp / "tiled.ppm"));

    SECTION("folded inference stays within one 8-bit code") {
      REQUIRE(run("infer --ckpt " + (tmp / "t.drfk") + " --in " + blurry +
                  " --out " + (tmp / "folded.ppm") + " --fold")
                  .code == 0);
      Tensor<float> a = read_ppm(tmp / "direct.ppm");
      Tensor<float> b = read_ppm(tmp / "folded.ppm");
      REQUIRE(max_abs_diff(a, b) <= 1.01f / 255.0f);
    }
  }
  SECTION("indivisible inputs without --tile point at --tile") {
    TrainState<float> fresh{Model<float>::build(cfg.network), {}, 0};
    save_checkpoint(tmp / "id.drfk", cfg, fresh);
    Tensor<float> odd(1, 3, 63, 64);
    write_ppm(tmp / "odd.ppm", odd);
    RunResult r = run("infer --ckpt " + (tmp / "id.drfk") + " --in " +
                      (tmp / "odd.ppm") + " --out " + (tmp / "x.ppm"));
    REQUIRE(r.code == 2);
    REQUIRE(r.output.find("--tile") != std::string::npos);
    REQUIRE(run("infer --ckpt " + (tmp / "id.drfk") + " --in " +
                (tmp / "odd.ppm") + " --out " + (tmp / "x.ppm") + " --tile")
                .code == 0);
    REQUIRE(read_file(tmp / "x.ppm") == read_file(tmp / "odd.ppm"));
  }
}

TEST_CASE("eval emits the metrics csv with the inf sentinel") {
  TmpDir tmp;
  Config cfg = parse_config(kMicroIni);
  write_file_atomic(tmp / "m.ini", serialize_config(cfg));
  REQUIRE(run("gen-data --config " + (tmp / "m.ini") + " --out " +
              (tmp / "pairs"))
              .code == 0);
  // identical pairs: sharp over blurry
  for (int i = 0; i < cfg.data.count; ++i) {
    const std::string tag = std::to_string(i);
    fs::copy_file(tmp / ("pairs/sharp_" + tag + ".ppm"),
                  tmp / ("pairs/blurry_" + tag + ".ppm"),
                  fs::copy_options::overwrite_existing);
  }
  TrainState<float> fresh{Model<float>::build(cfg.network), {}, 0};
  save_checkpoint(tmp / "id.drfk", cfg, fresh);
  REQUIRE(run("eval --ckpt " + (tmp / "id.drfk") + " --pairs " +
              (tmp / "pairs") + " --out " + (tmp / "metrics.csv"))
              .code == 0);
  const std::string csv = read_file(tmp / "metrics.csv");
  REQUIRE(csv.rfind("name,value,resolution,config-hash\n", 0) == 0);
  REQUIRE(csv.find("psnr/pair_0,inf,64x64,") != std::string::npos);
  REQUIRE(csv.find("psnr/pair_1,inf,64x64,") != std::string::npos);
  REQUIRE(csv.find("psnr/mean,inf,") != std::string::npos);
  REQUIRE(csv.find("ssim/pair_0,1,64x64,") != std::string::npos);
  REQUIRE(csv.find("ssim/mean,1,") != std::string::npos);

  SECTION("an empty pair directory exits 2") {
    fs::create_directories(tmp / "none");
    REQUIRE(run("eval --ckpt " + (tmp / "id.drfk") + " --pairs " +
                (tmp / "none") + " --out " + (tmp / "m2.csv"))
                .code == 2);
  }
}

TEST_CASE("analyze writes spectrum maps") {
  TmpDir tmp;
  Config cfg = parse_config(kMicroIni);
  TrainState<float> fresh{Model<float>::build(cfg.network), {}, 0};
  save_checkpoint(tmp / "id.drfk", cfg, fresh);
  write_ppm(tmp / "const.ppm", Tensor<float>::full(Shape{1, 3, 64, 64}, 0.5f));

  REQUIRE(run("analyze --ckpt " + (tmp / "id.drfk") + " --in " +
              (tmp / "const.ppm") + " --out " + (tmp / "maps"))
              .code == 0);
  for (const char* f :
       {"input_spectrum.pgm", "input_spectrum.f32", "restored_spectrum.pgm",
        "diff_spectrum.f32", "feature_db0.b0_fft.pgm",
        "feature_db0.b0_res.f32"})
    REQUIRE(fs::exists(fs::path(tmp / "maps") / f));

  SECTION("a constant image leaves a single DC pixel") {
    Tensor<float> pgm = read_pgm(tmp / "maps/input_spectrum.pgm");
    int nonzero = 0;
    for (std::size_t i = 0; i < pgm.numel(); ++i) nonzero += pgm[i] != 0.0f;
    REQUIRE(nonzero == 1);
    REQUIRE(pgm.at(0, 0, 32, 32) == 1.0f);

    Tensor<float> raw = read_f32(tmp / "maps/input_spectrum.f32",
                                 Shape{1, 1, 64, 64});
    const float dc = float(128.0 / 255.0 * 64 * 64);
    REQUIRE(std::abs(raw.at(0, 0, 32, 32) - dc) <= 0.01f);
  }
  SECTION("a named block that does not exist lists the real ones") {
    RunResult r = run("analyze --ckpt " + (tmp / "id.drfk") + " --in " +
                      (tmp / "const.ppm") + " --out " + (tmp / "maps") +
                      " --block nope");
    REQUIRE(r.code == 2);
    REQUIRE(r.output.find("eb0.b0") != std::string::npos);
  }
}
