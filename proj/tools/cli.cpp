#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "csiqa/errors.hpp"
#include "csiqa/head.hpp"
#include "csiqa/numerics/ops.hpp"
#include "csiqa/pipeline/checkpoint.hpp"
#include "csiqa/pipeline/dataset.hpp"
#include "csiqa/pipeline/image_io.hpp"
#include "csiqa/pipeline/metrics.hpp"
#include "csiqa/pipeline/model.hpp"
#include "csiqa/pipeline/synthetic.hpp"
#include "csiqa/pipeline/trainer.hpp"

namespace csiqa::cli {

namespace fs = std::filesystem;
using namespace csiqa::pipeline;

namespace {

struct ModelFlags {
  std::string variant = "cl-iqa";
  std::string ratio = "0.1";
  std::size_t block_size = 4;
  std::size_t embed_dim = 32;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t ff_hidden = 0;
  std::size_t window = 2;
  double alpha = 0.1;
  bool alpha_learnable = false;
  std::size_t sstm_modules = 1;
  std::size_t crop = 32;
  std::size_t max_side = 64;
};

struct Common {
  std::uint64_t seed = 0;
};

double parse_ratio_value(const std::string& text) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || p != text.data() + text.size()) {
    throw InputError("--ratio expects a number in (0, 1] or 'r', got '" + text + "'");
  }
  if (!(v > 0.0 && v <= 1.0)) throw InputError("--ratio must lie in (0, 1], got " + text);
  return v;
}

RatioMode parse_ratio_mode(const std::string& text) {
  if (text == "r") return RatioMode::any_of(kArbitraryRatios);
  return RatioMode::fixed(parse_ratio_value(text));
}

// Ratios to evaluate: an explicit value, every ratio of the set for "r", or
// the model's default.
std::vector<double> eval_ratios(const std::string& text, const Model& model) {
  if (text.empty()) return {model.config.ratio_mode.default_ratio()};
  if (text == "r") return kArbitraryRatios;
  return {parse_ratio_value(text)};
}

void check_ratio(const Model& model, double ratio) {
  const auto& c = model.config;
  const std::size_t rows = csm::measurement_rows(ratio, c.block_size);
  if (c.variant == Variant::cs_iqa && rows > c.embed_dim) {
    throw InputError("ratio " + format_double(ratio) + " keeps " + std::to_string(rows) +
                     " measurements per block, more than the embedding width " + std::to_string(c.embed_dim) +
                     "; cs-iqa feeds measurements to the encoder unembedded, so it needs ceil(ratio*B^2) <= d");
  }
}

ModelConfig build_config(const ModelFlags& f, std::uint64_t seed) {
  ModelConfig c;
  c.variant = parse_variant(f.variant);
  c.block_size = f.block_size;
  c.embed_dim = f.embed_dim;
  c.depth = f.depth;
  c.heads = f.heads;
  c.ff_hidden = f.ff_hidden;
  c.window = f.window;
  c.alpha = f.alpha;
  c.alpha_learnable = f.alpha_learnable;
  c.sstm_modules = f.sstm_modules;
  c.ratio_mode = parse_ratio_mode(f.ratio);
  c.crop_size = f.crop;
  c.max_side = f.max_side;
  c.seed = seed;
  c.validate();
  return c;
}

void print_header(const CLI::App& sub, std::ostream& out) {
  out << "# csiqa " << sub.get_name() << '\n';
  std::istringstream lines(sub.config_to_str(true, false));
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty()) out << "#   " << line << '\n';
  }
}

std::string num(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

std::vector<nn::Tensor> read_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("corpus directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<nn::Tensor> out;
  for (const auto& f : files) out.push_back(read_luminance(f));
  if (out.empty()) throw InputError("corpus directory " + dir.string() + " holds no .pgm/.ppm images");
  return out;
}

std::vector<Sample> select(const Manifest& m, const std::string& split, std::uint64_t seed) {
  if (split == "all") return load_samples(m);
  const auto s = split_dataset(m.records.size(), seed);
  if (split == "train") return load_samples(m, s.train);
  if (split == "validation") return load_samples(m, s.validation);
  return load_samples(m, s.test);
}

void add_model_flags(CLI::App& sub, ModelFlags& f) {
  sub.add_option("--variant", f.variant, "cl-iqa or cs-iqa")->check(CLI::IsMember({"cl-iqa", "cs-iqa"}));
  sub.add_option("--ratio", f.ratio, "sampling ratio in (0, 1], or r for any of 0.1/0.2/0.5/1.0");
  sub.add_option("--block-size", f.block_size, "sampling block side B");
  sub.add_option("--embed-dim", f.embed_dim, "token width d");
  sub.add_option("--depth", f.depth, "encoder blocks");
  sub.add_option("--heads", f.heads, "attention heads");
  sub.add_option("--ff-hidden", f.ff_hidden, "feed-forward width (0: 4d)");
  sub.add_option("--window", f.window, "SSTM window side in tokens");
  sub.add_option("--alpha", f.alpha, "SSTM convolution scale");
  sub.add_flag("--alpha-learnable", f.alpha_learnable, "train the SSTM scale");
  sub.add_option("--sstm-modules", f.sstm_modules, "SSTM modules after the encoder");
  sub.add_option("--crop", f.crop, "training and evaluation crop side");
  sub.add_option("--max-side", f.max_side, "largest padded image side the position table covers");
}

void add_seed(CLI::App& sub, Common& c) {
  sub.add_option("--seed", c.seed, "random seed")->envname("CSIQA_SEED");
}

void write_weight_map(const fs::path& path, const nn::Tensor& image, const Model& model, double ratio) {
  nn::NoGradGuard guard;
  const auto r = forward(image, model, ratio);
  write_pgm(path, head::weight_map(r.head.token_weights.data(), r.measurements.grid));
}

struct Pretrain {
  std::string corpus, out;
  double ratio = 0.0;
  std::size_t epochs = 200;
  double lr = 1e-2;
  std::size_t block_size = 4;
  std::size_t width = 16;
};

int cmd_pretrain(const Pretrain& p, const Common& c, std::ostream& out) {
  if (!(p.ratio > 0.0 && p.ratio <= 1.0)) throw InputError("--ratio must lie in (0, 1]");
  const auto corpus = read_corpus(p.corpus);
  out << "corpus: " << corpus.size() << " images\n";
  csm::PretrainOptions o;
  o.epochs = p.epochs;
  o.lr = p.lr;
  o.seed = c.seed;
  o.refine_width = p.width;
  const auto result = csm::pretrain_csm(corpus, p.ratio, p.block_size, o);
  const auto& h = result.loss_history;
  for (std::size_t i = 0; i < h.size(); ++i) out << "epoch " << i << " mse " << num(h[i]) << '\n';
  out << "initial MSE=" << num(h.front()) << " final MSE=" << num(h.back()) << '\n';
  csm_checkpoint(result, p.ratio).save(p.out);
  out << "wrote " << p.out << '\n';
  return kExitOk;
}

struct Train {
  std::string manifest, out, csm, state, resume;
  std::size_t epochs = 100;
  std::size_t batch = 8;
  double lr = 1e-5;
  double wd = 1e-5;
  std::uint64_t max_steps = 0;
  std::size_t val_crops = 1;
  std::size_t crops = 5;
};

int cmd_train(const Train& t, const ModelFlags& f, const Common& c, std::ostream& out) {
  const Manifest manifest = read_manifest(t.manifest);
  const auto split = split_dataset(manifest.records.size(), c.seed);
  out << "split: train " << split.train.size() << ", validation " << split.validation.size() << ", test "
      << split.test.size() << '\n';
  auto train = load_samples(manifest, split.train);
  auto validation = load_samples(manifest, split.validation);
  const auto test = load_samples(manifest, split.test);

  std::optional<Trainer> trainer;
  if (!t.resume.empty()) {
    trainer.emplace(Trainer::resume(Checkpoint::load(t.resume), std::move(train), std::move(validation)));
    trainer->options().epochs = t.epochs;
    trainer->options().max_steps = t.max_steps;
    out << "resumed from " << t.resume << " at step " << trainer->steps_taken()
        << " (model settings come from the checkpoint)\n";
  } else {
    Model model = Model::create(build_config(f, c.seed));
    if (!t.csm.empty()) {
      const auto s = sampling_from_checkpoint(Checkpoint::load(t.csm));
      if (s.block_size != model.config.block_size) {
        throw InputError("CSM checkpoint uses B=" + std::to_string(s.block_size) + ", model uses B=" +
                         std::to_string(model.config.block_size));
      }
      auto dst = model.sampling.phi.mutable_data();
      std::copy(s.phi.data().begin(), s.phi.data().end(), dst.begin());
      out << "csm.phi initialized from " << t.csm << '\n';
    }
    TrainOptions o;
    o.batch_size = t.batch;
    o.lr = t.lr;
    o.weight_decay = t.wd;
    o.epochs = t.epochs;
    o.max_steps = t.max_steps;
    o.validation_crops = t.val_crops;
    o.seed = c.seed;
    trainer.emplace(std::move(model), std::move(train), std::move(validation), o);
  }
  out << "parameters: " << trainer->model().parameter_count() << '\n';

  trainer->run([&](const EpochRecord& r) {
    out << "epoch " << r.epoch << " step " << r.step << " loss " << num(r.train_loss) << " val_srcc "
        << num(r.val_srcc) << '\n';
  });
  const Model& best = trainer->selected_model();
  model_checkpoint(best).save(t.out);
  out << "wrote " << t.out << '\n';
  if (!t.state.empty()) {
    trainer->checkpoint().save(t.state);
    out << "wrote trainer state " << t.state << '\n';
  }
  if (std::isfinite(trainer->best_validation_srcc())) {
    out << "best val SRCC=" << num(trainer->best_validation_srcc()) << '\n';
  } else {
    out << "best val SRCC=n/a (validation split too small)\n";
  }
  if (test.size() >= 2) {
    const auto& mode = best.config.ratio_mode;
    const std::vector<double> ratios = mode.arbitrary ? mode.ratios : std::vector<double>{mode.ratios.front()};
    for (double r : ratios) {
      try {
        const auto e = evaluate(best, test, r, t.crops, c.seed);
        out << "test ratio=" << format_double(r) << " PLCC=" << num(e.plcc) << " SRCC=" << num(e.srcc) << '\n';
      } catch (const UndefinedCorrelation& e) {
        out << "test ratio=" << format_double(r) << " correlation undefined: " << e.what() << '\n';
      }
    }
  }
  return kExitOk;
}

struct Eval {
  std::string manifest, ckpt, ratio, report, split = "all";
  std::size_t crops = 5;
};

int cmd_eval(const Eval& e, const Common& c, std::ostream& out) {
  const Model model = model_from_checkpoint(Checkpoint::load(e.ckpt));
  const auto ratios = eval_ratios(e.ratio, model);
  for (double r : ratios) check_ratio(model, r);
  const Manifest manifest = read_manifest(e.manifest);
  const auto samples = select(manifest, e.split, c.seed);
  if (samples.size() < 2) throw InputError("evaluation needs at least two images");
  std::ofstream report;
  if (!e.report.empty()) {
    report.open(e.report);
    if (!report) throw InputError("cannot write report " + e.report);
    report << "name,mos,prediction,ratio,crops,seed\n" << std::setprecision(17);
  }
  for (double r : ratios) {
    const auto res = evaluate(model, samples, r, e.crops, c.seed);
    if (ratios.size() > 1) out << "ratio=" << format_double(r) << ' ';
    out << "PLCC=" << num(res.plcc) << " SRCC=" << num(res.srcc) << '\n';
    if (report) {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        report << samples[i].name << ',' << samples[i].mos << ',' << res.predictions[i] << ',' << r << ','
               << e.crops << ',' << c.seed << '\n';
      }
    }
  }
  return kExitOk;
}

struct Score {
  std::string image, ckpt, ratio, weight_map;
  std::size_t crops = 5;
};

int cmd_score(const Score& s, const Common& c, std::ostream& out) {
  const Model model = model_from_checkpoint(Checkpoint::load(s.ckpt));
  const auto ratios = eval_ratios(s.ratio, model);
  if (ratios.size() != 1) throw InputError("score takes a single --ratio value");
  check_ratio(model, ratios[0]);
  const nn::Tensor image = read_luminance(s.image);
  out << std::setprecision(10) << predict_crops(model, image, ratios[0], s.crops, c.seed, 0) << '\n';
  if (!s.weight_map.empty()) {
    write_weight_map(s.weight_map, image, model, ratios[0]);
    out << "wrote " << s.weight_map << '\n';
  }
  return kExitOk;
}

struct WeightMaps {
  std::string ckpt, out_dir, image, ratio;
  std::vector<double> snrs{10.0, 1.0, 0.1};
  std::size_t pattern = 0;
};

// Noise on the right half only at several SNRs; the weight branch should
// shift attention between the halves as the noise grows.
int cmd_weight_map(const WeightMaps& w, const Common& c, std::ostream& out) {
  const Model model = model_from_checkpoint(Checkpoint::load(w.ckpt));
  const auto ratios = eval_ratios(w.ratio, model);
  if (ratios.size() != 1) throw InputError("weight-map takes a single --ratio value");
  check_ratio(model, ratios[0]);
  nn::Rng rng(c.seed);
  const nn::Tensor clean = w.image.empty() ? clean_pattern(model.config.crop_size, w.pattern, rng)
                                           : read_luminance(w.image);
  fs::create_directories(w.out_dir);
  const fs::path dir(w.out_dir);
  write_pgm(dir / "clean.pgm", clean);
  for (double snr : w.snrs) {
    const nn::Tensor noisy = add_white_noise(clean, snr, rng, clean.dim(2) / 2);
    const std::string tag = "snr" + format_double(snr);
    write_pgm(dir / ("noisy_" + tag + ".pgm"), noisy);
    nn::NoGradGuard guard;
    const auto r = forward(noisy, model, ratios[0]);
    const auto& grid = r.measurements.grid;
    const auto wts = r.head.token_weights.data();
    double left = 0.0, right = 0.0;
    std::size_t nl = 0, nr = 0;
    for (std::size_t i = 0; i < wts.size(); ++i) {
      // blocks left of the image midline
      if ((i % grid.blocks_w) * grid.block_size < clean.dim(2) / 2) {
        left += wts[i];
        ++nl;
      } else {
        right += wts[i];
        ++nr;
      }
    }
    write_pgm(dir / ("weights_" + tag + ".pgm"), head::weight_map(wts, grid));
    out << "snr=" << format_double(snr) << " score=" << num(r.head.score.item())
        << " mean_weight_left=" << num(nl ? left / nl : 0.0) << " mean_weight_right=" << num(nr ? right / nr : 0.0)
        << '\n';
  }
  out << "wrote " << w.out_dir << '\n';
  return kExitOk;
}

struct Synth {
  std::string out_dir;
  std::size_t count = 32;
  std::size_t side = 40;
  std::string distortion = "noise";
};

int cmd_synth(const Synth& s, const Common& c, std::ostream& out) {
  SyntheticOptions o;
  o.count = s.count;
  o.side = s.side;
  o.seed = c.seed;
  o.distortion = s.distortion == "blur" ? Distortion::blur : s.distortion == "mixed" ? Distortion::mixed
                                                                                      : Distortion::noise;
  const auto data = make_synthetic_dataset(o);
  fs::create_directories(s.out_dir);
  Manifest m;
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::ostringstream name;
    name << "img_" << std::setw(3) << std::setfill('0') << i << ".pgm";
    const fs::path path = fs::path(s.out_dir) / name.str();
    write_pgm(path, data[i].image);
    m.records.push_back({path.generic_string(), data[i].mos, i + 2});
  }
  const fs::path manifest = fs::path(s.out_dir) / "manifest.csv";
  write_manifest(manifest, m);
  out << "wrote " << data.size() << " images and " << manifest.generic_string() << '\n';
  return kExitOk;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

// Splices `key=value` lines from the file named by --config into the argument
// list as flags, skipping any flag already given explicitly. Blank lines,
// `#` comments and `[section]` headers are ignored; `true`/`false` toggle
// switches and space-separated values become repeated arguments.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  auto it = std::find(args.begin(), args.end(), "--config");
  if (it == args.end() || it + 1 == args.end()) return args;
  const std::string file = *(it + 1);
  std::ifstream in(file);
  if (!in) throw InputError("cannot open config file " + file);
  std::vector<std::string> extra;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(file + " line " + std::to_string(lineno) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    const std::string flag = "--" + key;
    if (std::find(args.begin(), args.end(), flag) != args.end()) continue;
    if (value == "true") {
      extra.push_back(flag);
    } else if (value != "false") {
      extra.push_back(flag);
      std::istringstream parts(value);
      for (std::string v; parts >> v;) extra.push_back(v);
    }
  }
  std::vector<std::string> out(args.begin(), it);
  out.insert(out.end(), extra.begin(), extra.end());
  out.insert(out.end(), it, args.end());
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Compressive-sampling image quality assessment"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  Common common;
  ModelFlags flags;
  Pretrain pretrain;
  Train train;
  Eval eval;
  Score score;
  WeightMaps weights;
  Synth synth;
  std::string config_path;

  auto* p = app.add_subcommand("pretrain", "pretrain the sampling matrix with a reconstruction network");
  p->add_option("--config", config_path, "key=value settings file; flags on the command line win");
  p->add_option("--corpus", pretrain.corpus, "directory of .pgm/.ppm images")->required();
  p->add_option("--ratio", pretrain.ratio, "sampling ratio in (0, 1]")->required();
  p->add_option("--out", pretrain.out, "checkpoint to write")->required();
  p->add_option("--epochs", pretrain.epochs, "full-batch epochs");
  p->add_option("--lr", pretrain.lr, "Adam learning rate");
  p->add_option("--block-size", pretrain.block_size, "sampling block side B");
  p->add_option("--width", pretrain.width, "reconstructor channel width");
  add_seed(*p, common);

  auto* t = app.add_subcommand("train", "train a quality model from a manifest");
  t->add_option("--config", config_path, "key=value settings file; flags on the command line win");
  t->add_option("--manifest", train.manifest, "CSV with header path,mos")->required();
  t->add_option("--out", train.out, "model checkpoint to write (best on validation)")->required();
  t->add_option("--csm", train.csm, "initialize the sampling matrix from a pretrained checkpoint");
  t->add_option("--state", train.state, "also write the full trainer state here");
  t->add_option("--resume", train.resume, "continue from a trainer state file");
  t->add_option("--epochs", train.epochs, "epochs");
  t->add_option("--batch", train.batch, "batch size");
  t->add_option("--lr", train.lr, "Adam learning rate");
  t->add_option("--wd", train.wd, "L2 weight decay");
  t->add_option("--max-steps", train.max_steps, "stop after this many optimizer steps (0: no limit)");
  t->add_option("--val-crops", train.val_crops, "crops per validation image");
  t->add_option("--crops", train.crops, "crops per test image");
  add_model_flags(*t, flags);
  add_seed(*t, common);

  auto* e = app.add_subcommand("eval", "PLCC and SRCC of a checkpoint on a manifest");
  e->add_option("--config", config_path, "key=value settings file; flags on the command line win");
  e->add_option("--manifest", eval.manifest, "CSV with header path,mos")->required();
  e->add_option("--ckpt", eval.ckpt, "model checkpoint")->required();
  e->add_option("--ratio", eval.ratio, "evaluation ratio, or r for each of 0.1/0.2/0.5/1.0");
  e->add_option("--crops", eval.crops, "random crops averaged per image");
  e->add_option("--report", eval.report, "per-image CSV report");
  e->add_option("--split", eval.split, "records to use; the split is drawn with --seed")
      ->check(CLI::IsMember({"all", "train", "validation", "test"}));
  add_seed(*e, common);

  auto* s = app.add_subcommand("score", "score one image");
  s->add_option("--config", config_path, "key=value settings file; flags on the command line win");
  s->add_option("--image", score.image, "PGM or PPM image")->required();
  s->add_option("--ckpt", score.ckpt, "model checkpoint")->required();
  s->add_option("--ratio", score.ratio, "sampling ratio (default: the model's)");
  s->add_option("--crops", score.crops, "random crops averaged");
  s->add_option("--weight-map", score.weight_map, "write the per-block weight map as PGM");
  add_seed(*s, common);

  auto* w = app.add_subcommand("weight-map", "weight maps for noise added to the right half");
  w->add_option("--config", config_path, "key=value settings file; flags on the command line win");
  w->add_option("--ckpt", weights.ckpt, "model checkpoint")->required();
  w->add_option("--out-dir", weights.out_dir, "output directory")->required();
  w->add_option("--image", weights.image, "clean image (default: a synthetic pattern)");
  w->add_option("--pattern", weights.pattern, "synthetic pattern kind 0-3");
  w->add_option("--snr", weights.snrs, "signal-to-noise ratios");
  w->add_option("--ratio", weights.ratio, "sampling ratio (default: the model's)");
  add_seed(*w, common);

  auto* y = app.add_subcommand("synth", "write a synthetic toy dataset and its manifest");
  y->add_option("--config", config_path, "key=value settings file; flags on the command line win");
  y->add_option("--out-dir", synth.out_dir, "output directory")->required();
  y->add_option("--count", synth.count, "number of images");
  y->add_option("--side", synth.side, "image side in pixels");
  y->add_option("--distortion", synth.distortion, "noise, blur or mixed")
      ->check(CLI::IsMember({"noise", "blur", "mixed"}));
  add_seed(*y, common);

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }

  try {
    std::vector<std::string> reversed(expanded.rbegin(), expanded.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    for (auto* sub : app.get_subcommands()) print_header(*sub, out);
    if (p->parsed()) return cmd_pretrain(pretrain, common, out);
    if (t->parsed()) return cmd_train(train, flags, common, out);
    if (e->parsed()) return cmd_eval(eval, common, out);
    if (s->parsed()) return cmd_score(score, common, out);
    if (w->parsed()) return cmd_weight_map(weights, common, out);
    if (y->parsed()) return cmd_synth(synth, common, out);
  } catch (const NumericalError& ex) {
    err << "numerical failure: " << ex.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace csiqa::cli
