// drfk: synthetic-data deblurring toolkit built around a multi-scale
// frequency-domain restoration network. Subcommands: gen-data, train, infer,
// eval, analyze, count. Exit codes: 0 ok, 2 usage/config error, 3 numeric
// failure (NaN loss and friends).

#include <CLI11.hpp>

#include <cinttypes>
#include <iomanip>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "drfk/checkpoint.hpp"
#include "drfk/image_io.hpp"
#include "drfk/metrics.hpp"

namespace fs = std::filesystem;
using namespace drfk;

namespace {

Config load_config_file(const std::string& path) {
  Config c = parse_config(read_file(path));
  c.validate();
  return c;
}

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

std::string csv_num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream o;
  o.precision(10);
  o << v;
  return o.str();
}

// ---- gen-data ----

void cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  const Config cfg = load_config_file(config_path);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), "gen-data: cannot create ",
          out_dir, ec ? ": " + ec.message() : "");

  std::string manifest =
      "index,scene_seed,noise_seed,kind,length,angle,sigma,noise_sigma\n";
  for (int i = 0; i < cfg.data.count; ++i) {
    const ScenePair p = make_scene_pair(cfg.data, i);
    const std::string tag = std::to_string(i);
    write_ppm((fs::path(out_dir) / ("sharp_" + tag + ".ppm")).string(),
              p.sharp);
    write_ppm((fs::path(out_dir) / ("blurry_" + tag + ".ppm")).string(),
              p.blurry);
    const bool motion = p.kernel.kind == BlurKernel::Kind::motion;
    manifest += tag + "," + std::to_string(p.scene_seed) + "," +
                std::to_string(p.noise_seed) + "," +
                (motion ? "motion" : "gaussian") + "," +
                detail::fmt_double(p.kernel.length) + "," +
                detail::fmt_double(p.kernel.angle) + "," +
                detail::fmt_double(p.kernel.sigma) + "," +
                detail::fmt_double(p.noise_sigma) + "\n";
  }
  write_file_atomic((fs::path(out_dir) / "manifest.csv").string(), manifest);
  std::cout << "wrote " << cfg.data.count << " pairs to " << out_dir << "\n";
}

// ---- train ----

void require_same_network(const NetworkConfig& a, const NetworkConfig& b) {
  require(a.levels == b.levels && a.blocks_per_stage == b.blocks_per_stage &&
              a.base_channels == b.base_channels &&
              a.block_kind == b.block_kind && a.conv_kind == b.conv_kind &&
              a.seed == b.seed,
          "train: --config [network] disagrees with the checkpoint snapshot");
}

void cmd_train(const std::string& config_path, const std::string& out_path,
               const std::string& resume_path) {
  const Config cfg = load_config_file(config_path);

  TrainState<float> st{Model<float>::build(cfg.network), {}, 0};
  if (!resume_path.empty()) {
    Config ck;
    st = load_checkpoint(resume_path, &ck);
    require_same_network(cfg.network, ck.network);
  }

  std::vector<ScenePair> pairs;
  for (int i = 0; i < cfg.data.count; ++i)
    pairs.push_back(make_scene_pair(cfg.data, i));

  // periodic snapshots keep their step in the name; the final state (and
  // only it) lands at --out, so a resumed run can target the same path
  const std::vector<LogRow> log =
      train<float>(st, pairs, cfg.train, [&](const TrainState<float>& s) {
        save_checkpoint(s.step >= cfg.train.steps
                            ? out_path
                            : out_path + ".step" + std::to_string(s.step),
                        cfg, s);
      });
  for (const LogRow& r : log)
    std::cout << "step=" << r.step << " loss=" << csv_num(r.loss)
              << " lr=" << csv_num(r.lr) << "\n";

  std::string csv = "step,loss,lr\n";
  for (const LogRow& r : log)
    csv += std::to_string(r.step) + "," + csv_num(r.loss) + "," +
           csv_num(r.lr) + "\n";
  write_file_atomic(fs::path(out_path).replace_extension("loss.csv").string(),
                    csv);
  std::cout << "checkpoint " << out_path << " at step " << st.step << "\n";
}

// ---- infer ----

Tensor<float> run_model(const Model<float>& m, const Tensor<float>& img,
                        const InferConfig& inf) {
  if (inf.tile) return tiled_inference(m, img, inf.window, inf.step);
  const int div = 1 << (m.config().levels - 1);
  require(img.h() % div == 0 && img.w() % div == 0, "infer: input ", img.h(),
          "x", img.w(), " is not divisible by 2^(levels-1) = ", div,
          "; pass --tile to restore arbitrary sizes");
  return m.restore(img);
}

void cmd_infer(const std::string& ckpt_path, const std::string& in_path,
               const std::string& out_path, bool fold, bool tile) {
  Config cfg;
  TrainState<float> st = load_checkpoint(ckpt_path, &cfg);
  if (fold) cfg.infer.fold = true;
  if (tile) cfg.infer.tile = true;
  const Model<float> model =
      cfg.infer.fold ? st.model.folded_copy() : std::move(st.model);
  const Tensor<float> img = read_ppm(in_path);
  write_ppm(out_path, clip01(run_model(model, img, cfg.infer)));
}

// ---- eval ----

void cmd_eval(const std::string& ckpt_path, const std::string& pairs_dir,
              const std::string& out_csv) {
  Config cfg;
  TrainState<float> st = load_checkpoint(ckpt_path, &cfg);
  const Model<float> model =
      cfg.infer.fold ? st.model.folded_copy() : std::move(st.model);
  const std::string hash = fnv1a_hex(serialize_config(cfg));

  std::string csv = "name,value,resolution,config-hash\n";
  double psnr_sum = 0, ssim_sum = 0;
  int n = 0;
  for (;; ++n) {
    const std::string tag = std::to_string(n);
    const fs::path sharp_p = fs::path(pairs_dir) / ("sharp_" + tag + ".ppm");
    const fs::path blurry_p = fs::path(pairs_dir) / ("blurry_" + tag + ".ppm");
    if (!fs::exists(sharp_p) || !fs::exists(blurry_p)) break;
    const Tensor<float> sharp = read_ppm(sharp_p.string());
    const Tensor<float> blurry = read_ppm(blurry_p.string());
    const Tensor<float> restored =
        clip01(run_model(model, blurry, cfg.infer));
    const double p = psnr(restored, sharp);
    const double s = ssim(restored, sharp);
    const std::string res =
        std::to_string(sharp.w()) + "x" + std::to_string(sharp.h());
    csv += "psnr/pair_" + tag + "," + csv_num(p) + "," + res + "," + hash +
           "\n";
    csv += "ssim/pair_" + tag + "," + csv_num(s) + "," + res + "," + hash +
           "\n";
    psnr_sum += p;
    ssim_sum += s;
  }
  require(n > 0, "eval: no sharp_<i>.ppm/blurry_<i>.ppm pairs in ",
          pairs_dir);
  csv += "psnr/mean," + csv_num(psnr_sum / n) + ",," + hash + "\n";
  csv += "ssim/mean," + csv_num(ssim_sum / n) + ",," + hash + "\n";
  write_file_atomic(out_csv, csv);
  std::cout << "evaluated " << n << " pairs -> " << out_csv << "\n";
}

// ---- analyze ----

void write_spectrum(const fs::path& base, const SpectrumMap& m) {
  write_f32(base.string() + ".f32", m.mag);
  const SpectrumMap disp = log_display(m);
  double peak = 0;
  for (std::size_t i = 0; i < disp.mag.numel(); ++i)
    peak = std::max(peak, disp.mag[i]);
  Tensor<float> img(1, 1, disp.mag.h(), disp.mag.w());
  for (std::size_t i = 0; i < disp.mag.numel(); ++i)
    img[i] = peak > 0 ? float(disp.mag[i] / peak) : 0.0f;
  write_pgm(base.string() + ".pgm", img);
}

void cmd_analyze(const std::string& ckpt_path, const std::string& in_path,
                 const std::string& out_dir, std::string block) {
  Config cfg;
  TrainState<float> st = load_checkpoint(ckpt_path, &cfg);
  const Model<float>& model = st.model;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec && fs::is_directory(out_dir), "analyze: cannot create ",
          out_dir, ec ? ": " + ec.message() : "");

  const Tensor<float> img = read_ppm(in_path);
  const Tensor<float> restored =
      clip01(run_model(model, img, cfg.infer));
  const fs::path out(out_dir);
  write_spectrum(out / "input_spectrum", image_spectrum(img));
  write_spectrum(out / "restored_spectrum", image_spectrum(restored));
  write_spectrum(out / "diff_spectrum", spectrum_diff(img, restored));

  if (block.empty())  // last full-resolution decoder block
    block = "db0.b" + std::to_string(cfg.network.blocks_per_stage - 1);
  // feature taps need the padded-to-window path when the input is ragged;
  // analyze keeps it simple and requires direct-forward compatibility
  const int div = 1 << (cfg.network.levels - 1);
  require(img.h() % div == 0 && img.w() % div == 0, "analyze: input ",
          img.h(), "x", img.w(), " is not divisible by 2^(levels-1) = ", div);
  StreamSpectra<float> ss = feature_spectrum(model, img, block);
  write_spectrum(out / ("feature_" + block + "_fft"), ss.fft);
  write_spectrum(out / ("feature_" + block + "_res"), ss.res);
  std::cout << "wrote spectra to " << out_dir << "\n";
}

// ---- count ----

void cmd_count(const std::string& config_path) {
  const Config cfg = load_config_file(config_path);
  const Model<float> model = Model<float>::build(cfg.network);
  const FlopReport rep = flops_count(model, 256, 256);
  std::cout << "params " << model.param_count() << "\n";
  std::cout << "params_training " << model.param_count_training() << "\n";
  std::cout << "macs_256x256 " << rep.total_macs << "\n";
  std::cout << "fft_ops_256x256 " << std::fixed << std::setprecision(0)
            << rep.fft_ops << "\n";
  std::cout << "convention " << rep.convention << "\n";
  for (const FlopEntry& e : rep.layers)
    std::cout << "layer " << e.name << " " << e.macs << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  // single logical thread everywhere; the env var is validated so scripts
  // that set it get a loud failure instead of silent nondeterminism
  if (const char* tv = std::getenv("DRFK_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(tv, &end, 10);
    if (tv == end || (end && *end != '\0') || v < 1) {
      std::cerr << "error: DRFK_THREADS must be a positive integer, got \""
                << tv << "\"\n";
      return 2;
    }
  }

  CLI::App app{"frequency-domain deblurring toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_path, resume_path, ckpt_path, in_path,
      pairs_dir, block;
  bool fold = false, tile = false;

  CLI::App* gen = app.add_subcommand("gen-data", "write synthetic pairs");
  gen->add_option("--config", config_path, "config file")->required();
  gen->add_option("--out", out_path, "output directory")->required();
  gen->callback([&] { cmd_gen_data(config_path, out_path); });

  CLI::App* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--config", config_path, "config file")->required();
  tr->add_option("--out", out_path, "checkpoint path")->required();
  tr->add_option("--resume", resume_path, "checkpoint to continue from");
  tr->callback([&] { cmd_train(config_path, out_path, resume_path); });

  CLI::App* inf = app.add_subcommand("infer", "restore one image");
  inf->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  inf->add_option("--in", in_path, "input ppm")->required();
  inf->add_option("--out", out_path, "output ppm")->required();
  inf->add_flag("--fold", fold, "fold trained conv pairs first");
  inf->add_flag("--tile", tile, "sliding-window inference");
  inf->callback([&] { cmd_infer(ckpt_path, in_path, out_path, fold, tile); });

  CLI::App* ev = app.add_subcommand("eval", "psnr/ssim over a pair directory");
  ev->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  ev->add_option("--pairs", pairs_dir, "directory from gen-data")->required();
  ev->add_option("--out", out_path, "metrics csv")->required();
  ev->callback([&] { cmd_eval(ckpt_path, pairs_dir, out_path); });

  CLI::App* an = app.add_subcommand("analyze", "spectrum maps");
  an->add_option("--ckpt", ckpt_path, "checkpoint")->required();
  an->add_option("--in", in_path, "input ppm")->required();
  an->add_option("--out", out_path, "output directory")->required();
  an->add_option("--block", block, "block to tap (default: last db0 block)");
  an->callback([&] { cmd_analyze(ckpt_path, in_path, out_path, block); });

  CLI::App* ct = app.add_subcommand("count", "parameters and MACs at 256^2");
  ct->add_option("--config", config_path, "config file")->required();
  ct->callback([&] { cmd_count(config_path); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
