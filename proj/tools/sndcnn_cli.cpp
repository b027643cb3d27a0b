// Command-line driver: synthetic data generation, training over the ablation
// grid, benchmarking, statistics bound checks, and pipeline inference.

#include "sndcnn/bench_suite.hpp"
#include "sndcnn/checkpoint.hpp"
#include "sndcnn/featio.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

using namespace sndcnn;
using nlohmann::json;

namespace {

struct CliConfig {
  ModelConfig model;
  // data
  std::uint64_t data_seed = 1;
  SynthSpec synth;
  std::string features_path, labels_path;
  TrainSettings training;
  BenchSettings bench;
};

void require_keys(const json& obj, const char* section,
                  std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("unknown key \"" + it.key() + "\" in config section \"" +
                        section + "\"");
  }
}

ModelConfig parse_model(const json& m) {
  require_keys(m, "model",
               {"stack", "depth", "widths", "activation", "shortcut", "batchnorm",
                "input_dim", "output_dim", "input_h", "input_w", "conv_bias",
                "init_override"});
  ModelConfig cfg;
  if (m.contains("stack")) {
    const std::string s = m["stack"];
    if (s == "dnn")
      cfg.stack = StackKind::dnn;
    else if (s == "cnn-bottleneck")
      cfg.stack = StackKind::cnn_bottleneck;
    else
      throw ConfigError("model.stack must be dnn or cnn-bottleneck, got " + s);
  }
  if (m.contains("depth")) cfg.depth = m["depth"];
  if (m.contains("widths")) cfg.widths = m["widths"].get<std::vector<int>>();
  if (m.contains("activation")) {
    const std::string a = m["activation"];
    if (a == "relu")
      cfg.activation = Activation::relu;
    else if (a == "selu")
      cfg.activation = Activation::selu;
    else
      throw ConfigError("model.activation must be relu or selu, got " + a);
  }
  if (m.contains("shortcut")) cfg.shortcut = m["shortcut"];
  if (m.contains("batchnorm")) cfg.batchnorm = m["batchnorm"];
  if (m.contains("input_dim")) cfg.input_dim = m["input_dim"];
  if (m.contains("output_dim")) cfg.output_dim = m["output_dim"];
  if (m.contains("input_h")) cfg.input_h = m["input_h"];
  if (m.contains("input_w")) cfg.input_w = m["input_w"];
  if (m.contains("conv_bias")) cfg.conv_bias = bool(m["conv_bias"]);
  if (m.contains("init_override")) {
    const std::string s = m["init_override"];
    if (s == "lecun-normal")
      cfg.init_override = InitScheme::lecun_normal;
    else if (s == "he-normal")
      cfg.init_override = InitScheme::he_normal;
    else
      throw ConfigError("model.init_override must be lecun-normal or he-normal");
  }
  return cfg;
}

CliConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json root = json::parse(in, nullptr, true, true);
  require_keys(root, "(top level)", {"model", "data", "training", "bench"});
  CliConfig cfg;
  if (root.contains("model")) cfg.model = parse_model(root["model"]);
  if (root.contains("data")) {
    const auto& d = root["data"];
    require_keys(d, "data",
                 {"seed", "frames", "classes", "separation", "seg_min", "seg_max",
                  "features", "labels"});
    if (d.contains("seed")) cfg.data_seed = d["seed"];
    if (d.contains("frames")) cfg.synth.frames = d["frames"];
    if (d.contains("classes")) cfg.synth.num_classes = d["classes"];
    if (d.contains("separation")) cfg.synth.separation = d["separation"];
    if (d.contains("seg_min")) cfg.synth.seg_min = d["seg_min"];
    if (d.contains("seg_max")) cfg.synth.seg_max = d["seg_max"];
    if (d.contains("features")) cfg.features_path = d["features"];
    if (d.contains("labels")) cfg.labels_path = d["labels"];
  }
  if (root.contains("training")) {
    const auto& t = root["training"];
    require_keys(t, "training",
                 {"lr", "batch", "max_steps", "eval_every", "eval_frames", "newbob",
                  "newbob_threshold", "stats_cadence", "stats_pre_activation"});
    if (t.contains("lr")) cfg.training.lr = t["lr"];
    if (t.contains("batch")) cfg.training.batch = t["batch"];
    if (t.contains("max_steps")) cfg.training.max_steps = t["max_steps"];
    if (t.contains("eval_every")) cfg.training.eval_every = t["eval_every"];
    if (t.contains("eval_frames")) cfg.training.eval_frames = t["eval_frames"];
    if (t.contains("newbob")) cfg.training.newbob = t["newbob"];
    if (t.contains("newbob_threshold"))
      cfg.training.newbob_threshold = t["newbob_threshold"];
    if (t.contains("stats_cadence")) cfg.training.stats_cadence = t["stats_cadence"];
    if (t.contains("stats_pre_activation"))
      cfg.training.stats_pre_activation = t["stats_pre_activation"];
  }
  if (root.contains("bench")) {
    const auto& b = root["bench"];
    require_keys(b, "bench",
                 {"reps", "warmup", "batch", "frames", "skip", "active_fraction",
                  "queue_capacity", "output_dim", "widths"});
    if (b.contains("reps")) cfg.bench.reps = b["reps"];
    if (b.contains("warmup")) cfg.bench.warmup = b["warmup"];
    if (b.contains("batch")) cfg.bench.batch = b["batch"];
    if (b.contains("frames")) cfg.bench.frames = b["frames"];
    if (b.contains("skip")) cfg.bench.skip = b["skip"];
    if (b.contains("active_fraction")) cfg.bench.active_fraction = b["active_fraction"];
    if (b.contains("queue_capacity")) cfg.bench.queue_capacity = b["queue_capacity"];
    if (b.contains("output_dim")) cfg.bench.output_dim = b["output_dim"];
    if (b.contains("widths")) cfg.bench.widths = b["widths"].get<std::vector<int>>();
  }
  return cfg;
}

struct GlobalArgs {
  std::string config_path;
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string precision = "f32";
  std::string out_dir = "out";
};

template <class S>
SyntheticData<S> load_or_gen_data(const CliConfig& cfg) {
  if (!cfg.features_path.empty()) {
    if (cfg.labels_path.empty())
      throw ConfigError("data.features requires data.labels for training");
    SyntheticData<S> data;
    data.features = read_features<S>(cfg.features_path);
    auto lf = read_labels(cfg.labels_path);
    if (long(lf.labels.size()) != long(data.features.dim(0)))
      throw FormatError("label count " + std::to_string(lf.labels.size()) +
                        " vs feature frames " + std::to_string(data.features.dim(0)));
    data.labels = std::move(lf.labels);
    data.num_classes = lf.num_classes;
    return data;
  }
  return gen_synthetic<S>(cfg.data_seed, cfg.synth);
}

int cmd_gen(const GlobalArgs& g, const CliConfig& cfg) {
  std::filesystem::create_directories(g.out_dir);
  SynthSpec spec = cfg.synth;
  const std::uint64_t seed = g.seed_set ? g.seed : cfg.data_seed;
  auto data = gen_synthetic<float>(seed, spec);
  const auto fpath = g.out_dir + "/features.fbnk";
  const auto lpath = g.out_dir + "/labels.lblu";
  write_features(data.features, fpath);
  write_labels(data.labels, data.num_classes, lpath);
  std::cout << "wrote " << fpath << " (" << data.features.dim(0) << " frames) and "
            << lpath << " (" << data.num_classes << " classes)\n";
  return 0;
}

template <class S>
int cmd_train(const GlobalArgs& g, const CliConfig& cfg) {
  std::filesystem::create_directories(g.out_dir);
  auto data = load_or_gen_data<S>(cfg);
  const auto split = make_split(data.features.dim(0));
  ModelConfig mc = cfg.model;
  if (mc.output_dim < data.num_classes)
    throw ConfigError("model.output_dim " + std::to_string(mc.output_dim) +
                      " < dataset classes " + std::to_string(data.num_classes));
  Network<S> net(mc, g.seed);

  std::ofstream log(g.out_dir + "/train.log");
  if (!log) throw IoError("cannot open train.log for writing");
  log.precision(12);
  auto result = train_model(net, data, split, cfg.training, g.seed ^ 0x5eed, &log);

  save_checkpoint(net, g.out_dir + "/checkpoint.sndc");
  std::ofstream csv(g.out_dir + "/stats.csv");
  if (!csv) throw IoError("cannot open stats.csv for writing");
  export_csv(result.stats, csv);

  std::cout << "status: " << train_status_name(result.status) << "\n"
            << "steps: " << result.steps_run << "\n"
            << "final_loss: " << result.final_loss << "\n"
            << "dev_loss: " << result.dev.loss << "\n"
            << "dev_acc: " << result.dev.accuracy << "\n";
  return result.status == TrainStatus::diverged ? 2 : 0;
}

std::vector<LayerStats> read_stats_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open stats csv: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "step,layer,mean,variance")
    throw FormatError("bad stats csv header in " + path);
  std::vector<LayerStats> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LayerStats s;
    std::istringstream ss(line);
    char c;
    if (!(ss >> s.step >> c >> s.layer >> c >> s.mean >> c >> s.variance))
      throw FormatError("bad stats csv row: " + line);
    out.push_back(s);
  }
  return out;
}

int cmd_stats(const GlobalArgs& g, const std::string& csv_path, int layer_lo,
              int layer_hi, double mean_bound, double var_bound) {
  (void)g;
  const auto records = read_stats_csv(csv_path);
  int hi = layer_hi;
  if (hi <= 0)
    for (const auto& r : records) hi = std::max(hi, r.layer);
  const auto report = check_bounds(records, layer_lo, hi, mean_bound, var_bound);
  bool all_pass = true;
  for (const auto& r : report) {
    std::cout << "layer " << r.layer << (r.pass ? " pass" : " FAIL") << " |mean|<="
              << r.worst_abs_mean << " var<=" << r.worst_variance << "\n";
    all_pass = all_pass && r.pass;
  }
  std::cout << (all_pass ? "all layers pass" : "bound violations found") << "\n";
  return all_pass ? 0 : 1;
}

template <class S>
int cmd_bench(const GlobalArgs& g, const CliConfig& cfg) {
  std::filesystem::create_directories(g.out_dir);
  BenchSettings bs = cfg.bench;
  bs.seed = g.seed;
  auto outcome = run_bench_suite<S>(bs, &std::cout);
  std::ofstream csv(g.out_dir + "/bench.csv");
  if (!csv) throw IoError("cannot open bench.csv for writing");
  write_bench_csv(outcome.rows, csv);
  std::cout << "precision " << g.precision << ", isa "
            << kern::isa_name(kern::active_isa()) << ", threads 2 (pipeline)\n"
            << "wrote " << g.out_dir << "/bench.csv\n";
  return 0;
}

ActiveFn make_active_fn(const std::string& mode, int output_dim, std::uint64_t seed,
                        std::vector<ActiveSet>& file_sets) {
  if (mode == "all") {
    ActiveSet all = ActiveSet::all(output_dim);
    return [all](long) { return all; };
  }
  if (!mode.empty() && mode[0] == '@') {
    const std::string path = mode.substr(1);
    std::ifstream in(path);
    if (!in) throw IoError("cannot open active-set file: " + path);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ss(line);
      std::vector<std::uint32_t> idx;
      std::uint32_t v;
      while (ss >> v) idx.push_back(v);
      file_sets.push_back(ActiveSet::from_indices(std::move(idx), output_dim));
    }
    return [&file_sets](long t) {
      if (t < 0 || std::size_t(t) >= file_sets.size())
        throw IndexError("active-set file has no line for frame " + std::to_string(t));
      return file_sets[std::size_t(t)];
    };
  }
  const double frac = std::stod(mode);
  if (!(frac > 0.0 && frac <= 1.0))
    throw ConfigError("--active fraction must be in (0, 1], got " + mode);
  return [output_dim, frac, seed](long t) {
    Rng rng(seed * 1000003 + std::uint64_t(t));
    return ActiveSet::fraction(output_dim, frac, rng);
  };
}

template <class S>
int cmd_infer(const GlobalArgs& g, const std::string& model_path,
              const std::string& features_path, int skip, const std::string& active,
              int queue, int front_batch, bool reference) {
  std::filesystem::create_directories(g.out_dir);
  Network<S> net = load_checkpoint<S>(model_path);
  FrameStream<S> stream{read_features<S>(features_path)};
  const auto sched = SkipSchedule::make(stream.total(), skip);
  std::vector<ActiveSet> file_sets;
  const ActiveFn active_fn =
      make_active_fn(active, net.config().output_dim, g.seed, file_sets);
  PipelineOptions opt{queue, front_batch};

  const auto t0 = std::chrono::steady_clock::now();
  PipelineResult<S> result = reference
                                 ? reference_run(net, stream, sched, active_fn, opt)
                                 : pipeline_run(net, stream, sched, active_fn, opt);
  const double sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto spath = g.out_dir + "/scores.bin";
  write_scores(result.frames, spath);
  std::cout << "frames: " << sched.total << "\n"
            << "frames_scored: " << result.counters.frames_scored << "\n"
            << "hidden_multiplies: " << result.counters.hidden_multiplies << "\n"
            << "output_multiplies: " << result.counters.output_multiplies << "\n"
            << "seconds: " << sec << "\n"
            << "fps: " << double(sched.total) / sec << "\n"
            << "mode: " << (reference ? "reference" : "pipeline") << "\n"
            << "wrote " << spath << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"self-normalizing deep CNN training and inference harness"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config_path, "JSON run configuration");
  auto* seed_opt = app.add_option("--seed", g.seed, "master seed (runs must be seeded)");
  app.add_option("--precision", g.precision, "f32 or f64")
      ->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--out", g.out_dir, "output directory");

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  auto* train = app.add_subcommand("train", "train a model from the config");
  auto* bench = app.add_subcommand("bench", "run the speedup benchmark grid");
  auto* stats = app.add_subcommand("stats", "check layer statistics bounds");
  auto* infer = app.add_subcommand("infer", "score a feature fileed through the pipeline");

  std::string stats_csv;
  int layer_lo = 1, layer_hi = 0;
  double mean_bound = 0.8, var_bound = 9.0;
  stats->add_option("--csv", stats_csv, "stats csv path")->required();
  stats->add_option("--layer-lo", layer_lo, "first layer to check");
  stats->add_option("--layer-hi", layer_hi, "last layer to check (0 = max)");
  stats->add_option("--mean-bound", mean_bound, "bound on |mean|");
  stats->add_option("--var-bound", var_bound, "bound on variance");

  std::string model_path, features_path, active_mode = "all";
  int skip = 1, queue = 4, front_batch = 1;
  bool reference = false;
  infer->add_option("--model", model_path, "checkpoint path")->required();
  infer->add_option("--features", features_path, "feature file path")->required();
  infer->add_option("--skip", skip, "frame-skip factor k");
  infer->add_option("--active", active_mode,
                    "output units: all | fraction in (0,1] | @file");
  infer->add_option("--queue", queue, "pipeline queue capacity");
  infer->add_option("--front-batch", front_batch, "front worker batch size");
  infer->add_flag("--reference", reference, "single-threaded reference mode");

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;

  try {
    if (!g.seed_set && (train->parsed() || bench->parsed() || infer->parsed()))
      throw ConfigError("--seed is required; runs must be reproducible");

    CliConfig cfg;
    if (!g.config_path.empty()) cfg = load_config(g.config_path);
    else if (gen->parsed() || train->parsed() || bench->parsed())
      throw ConfigError("--config is required for this subcommand");

    const bool f64 = g.precision == "f64";
    if (gen->parsed()) return cmd_gen(g, cfg);
    if (train->parsed())
      return f64 ? cmd_train<double>(g, cfg) : cmd_train<float>(g, cfg);
    if (bench->parsed())
      return f64 ? cmd_bench<double>(g, cfg) : cmd_bench<float>(g, cfg);
    if (stats->parsed())
      return cmd_stats(g, stats_csv, layer_lo, layer_hi, mean_bound, var_bound);
    if (infer->parsed())
      return f64 ? cmd_infer<double>(g, model_path, features_path, skip, active_mode,
                                     queue, front_batch, reference)
                 : cmd_infer<float>(g, model_path, features_path, skip, active_mode,
                                    queue, front_batch, reference);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
