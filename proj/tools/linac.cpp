// linac: datasets, fitting, training, attacks and reports from the shell.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
// Every command writes its outputs under --out; wall-clock times go only to
// the run.json sidecar so all other files are byte-identical across reruns.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "linac/attacks.hpp"
#include "linac/checkpoint.hpp"
#include "linac/config.hpp"
#include "linac/dataset.hpp"
#include "linac/evaluation.hpp"
#include "linac/inr.hpp"
#include "linac/json_io.hpp"
#include "linac/pipeline.hpp"

namespace fs = std::filesystem;
using linac::json_io::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::vector<std::string> g_argv;
std::size_t g_workers = 0;

std::size_t workers() { return g_workers ? g_workers : linac::default_workers(); }

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_sidecar(const fs::path& path, const std::string& command, const std::string& started) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  json j{{"command", command}, {"argv", g_argv}, {"workers", workers()}, {"started", started}, {"finished", utc_now()}};
  linac::checkpoint::write_json(path, j);
}

linac::config::ExperimentConfig load_config(const std::string& path) {
  if (!fs::exists(path)) throw UsageError("config file not found: " + path);
  return linac::config::load(path);
}

linac::PrivateKey parse_key(const std::string& s) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(s, &used, 0);
    if (used != s.size()) throw std::invalid_argument(s);
    return linac::PrivateKey{static_cast<std::int64_t>(v)};
  } catch (const std::exception&) {
    throw UsageError("--key must be a signed 64-bit integer, got '" + s + "'");
  }
}

/// One image [rows, cols, 3]: a CIFAR-10 record or an LNT1 tensor of rank 3
/// (or rank 4 indexed by --index).
linac::Tensor<float> read_image(const fs::path& path, std::size_t index) {
  if (!fs::exists(path)) throw UsageError("image not found: " + path.string());
  if (path.extension() == ".bin") {
    auto ds = linac::data::read_cifar10(path, index + 1);
    if (index >= ds.size()) throw UsageError("--index " + std::to_string(index) + " past end of " + path.string());
    return ds.image(index);
  }
  auto t = linac::lnt1::load<float>(path);
  if (t.rank() == 3) return t;
  if (t.rank() == 4) {
    if (index >= t.dim(0)) throw UsageError("--index " + std::to_string(index) + " past end of " + path.string());
    linac::Tensor<float> one = t.slice(index, 1);
    return one.reshaped({t.dim(1), t.dim(2), t.dim(3)});
  }
  throw UsageError(path.string() + " holds a rank-" + std::to_string(t.rank()) + " tensor, not an image");
}

linac::data::Dataset read_dataset(const std::string& stem) {
  if (!fs::exists(stem + ".images.lnt1")) throw UsageError("dataset not found: " + stem + ".images.lnt1");
  return linac::data::load_dataset(stem);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::size_t count = 1000, size = 16;
  std::uint64_t seed = 1;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  const auto started = utc_now();
  linac::data::SyntheticSpec spec;
  spec.count = a.count;
  spec.size = a.size;
  spec.seed = a.seed;
  const auto ds = linac::data::synthetic_dataset(spec);
  linac::data::save_dataset(a.out, ds);
  linac::checkpoint::write_json(a.out + ".json", {{"kind", "dataset"}, {"synthetic", linac::json_io::to_json(spec)}});
  write_sidecar(a.out + ".run.json", "synth", started);
  return 0;
}

struct ImportArgs {
  std::vector<std::string> inputs;
  std::size_t max = 0;
  std::string out;
};

int cmd_import(const ImportArgs& a) {
  const auto started = utc_now();
  std::vector<linac::data::Dataset> parts;
  std::size_t total = 0;
  for (const auto& in : a.inputs) {
    if (!fs::exists(in)) throw UsageError("CIFAR-10 batch not found: " + in);
    parts.push_back(linac::data::read_cifar10(in));
    total += parts.back().size();
  }
  if (a.max) total = std::min(total, a.max);
  linac::data::Dataset ds{linac::Tensor<float>({total, 32, 32, 3}), {}, 10};
  std::size_t at = 0;
  for (const auto& p : parts)
    for (std::size_t i = 0; i < p.size() && at < total; ++i, ++at) {
      const auto img = p.images.item(i);
      std::copy(img.begin(), img.end(), ds.images.data() + at * img.size());
      ds.labels.push_back(p.labels[i]);
    }
  linac::data::save_dataset(a.out, ds);
  linac::checkpoint::write_json(a.out + ".json", {{"kind", "dataset"}, {"source", "cifar10"}, {"count", total}});
  write_sidecar(a.out + ".run.json", "import-cifar", started);
  return 0;
}

struct FitArgs {
  std::string image, key, out;
  std::size_t index = 0;
  linac::inr::FitConfig fit;
  linac::inr::InrArch arch;
  std::size_t repr_layer = 2;
  bool repr_given = false;
  bool reconstruction = false;
};

int cmd_fit(FitArgs a) {
  a.fit.key = parse_key(a.key);
  const std::size_t K = a.reconstruction ? a.arch.layers : a.repr_layer;
  if (a.reconstruction && a.repr_given && a.repr_layer != a.arch.layers)
    throw UsageError("--reconstruction outputs layer " + std::to_string(a.arch.layers) + "; drop --repr-layer or set it to --layers");
  if (!a.reconstruction && a.repr_layer >= a.arch.layers)
    throw UsageError("--repr-layer " + std::to_string(a.repr_layer) + " must be below --layers " +
                     std::to_string(a.arch.layers) + " (pass --reconstruction for the colour output)");
  try {
    a.fit.validate();
    a.arch.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto image = read_image(a.image, a.index);
  const auto started = utc_now();

  const auto result = linac::inr::fit_inr<float>(image, a.fit, a.arch, true);
  const fs::path out = a.out;
  linac::checkpoint::save_inr(out / "inr", result.inr, a.fit);
  {
    std::ofstream os(out / "trace.csv");
    os << "step,lr,loss,batch_sse\n" << std::setprecision(9);
    for (const auto& t : result.trace) os << t.step << ',' << t.lr << ',' << t.loss << ',' << t.batch_sse << '\n';
  }
  const auto rows = image.dim(0), cols = image.dim(1);
  linac::lnt1::save(out / "representation.lnt1", linac::inr::activation_image(result.inr, rows, cols, K));
  const double err = linac::inr::reconstruction_error(linac::inr::reconstruct(result.inr, rows, cols), image);
  linac::checkpoint::write_json(out / "fit.json", {{"image", a.image},
                                                   {"index", a.index},
                                                   {"arch", linac::json_io::to_json(a.arch)},
                                                   {"fit", linac::json_io::to_json(a.fit)},
                                                   {"repr_layer", K},
                                                   {"reconstruction", a.reconstruction},
                                                   {"steps", result.trace.size()},
                                                   {"reconstruction_error", err}});
  write_sidecar(out / "run.json", "fit", started);
  std::cout << "reconstruction error " << err << " after " << result.trace.size() << " steps\n";
  return 0;
}

struct TransformArgs {
  std::string dataset, key, config, out, stats;
};

int cmd_transform(const TransformArgs& a) {
  const auto cfg = load_config(a.config);
  auto tr = cfg.transform.with_key(parse_key(a.key));
  const auto ds = read_dataset(a.dataset);
  const auto started = utc_now();
  const auto stats = a.stats.empty() ? linac::transforms::fit_normalization(ds.images)
                                     : linac::checkpoint::load_classifier(a.stats).stats;
  linac::data::Dataset out{linac::transforms::transform_batch(tr, linac::transforms::apply_normalization(ds.images, stats),
                                                              workers()),
                           ds.labels, ds.num_classes};
  linac::data::save_dataset(a.out, out);
  json tj = linac::json_io::to_json(tr);
  tj.erase("key");
  linac::checkpoint::write_json(a.out + ".json", {{"kind", "transformed-dataset"},
                                                  {"input", a.dataset},
                                                  {"transform", tj},
                                                  {"normalization", {{"mean", stats.mean}, {"stddev", stats.stddev}}},
                                                  {"count", ds.size()}});
  write_sidecar(a.out + ".run.json", "transform", started);
  return 0;
}

struct TrainArgs {
  std::string config, out;
};

int cmd_train(const TrainArgs& a) {
  const auto cfg = load_config(a.config);
  const fs::path out = a.out.empty() ? fs::path(cfg.output_dir) : fs::path(a.out);
  const auto started = utc_now();
  const auto splits = linac::config::load_splits(cfg.dataset);
  const auto t = linac::pipeline::train_behind(splits.train, cfg.transform, cfg.classifier, cfg.train, workers());
  linac::pipeline::save(out / "classifier", t, cfg.train);
  const auto target = linac::pipeline::deployed_model(t, workers());
  const auto pred = linac::predict_labels(*target, splits.test.images);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == splits.test.labels[i];
  const double acc = static_cast<double>(correct) / static_cast<double>(pred.size());
  linac::checkpoint::write_json(out / "train.json", {{"config", linac::config::to_json(cfg)},
                                                     {"train_examples", splits.train.size()},
                                                     {"test_examples", splits.test.size()},
                                                     {"clean_accuracy", acc}});
  write_sidecar(out / "run.json", "train", started);
  std::cout << "clean accuracy " << linac::evaluation::format_percent(acc) << "%\n";
  return 0;
}

struct AttackArgs {
  std::string config, checkpoint, out;
  std::size_t count = 0;
};

int cmd_attack(const AttackArgs& a) {
  const auto cfg = load_config(a.config);
  if (!fs::exists(fs::path(a.checkpoint) / "model.json"))
    throw UsageError("no classifier checkpoint at " + a.checkpoint);
  const fs::path out = a.out.empty() ? fs::path(cfg.output_dir) : fs::path(a.out);
  const auto started = utc_now();
  auto splits = linac::config::load_splits(cfg.dataset);
  if (a.count && a.count < splits.test.size()) splits.test = splits.test.slice(0, a.count);
  const auto target = linac::pipeline::load(a.checkpoint);
  linac::pipeline::SourceContext ctx{&target, &splits.train, &cfg, workers(), out / "sources"};
  const auto rep = linac::pipeline::run_attacks(cfg, ctx, splits.test, &std::cerr);
  for (const auto& c : rep.columns)
    linac::pipeline::save_outcome(out / "attacks" / (c.spec.name + "@" + c.spec.source.name()), c, splits.test);
  linac::evaluation::save_masks(out / "masks.csv", rep.mask);
  const auto r = linac::evaluation::emit_report(out / "report", rep.mask,
                                                {{"checkpoint", a.checkpoint}, {"examples", splits.test.size()}});
  write_sidecar(out / "run.json", "attack", started);
  std::cout << linac::evaluation::report_csv(r);
  return 0;
}

struct BruteArgs {
  std::string config, checkpoint, out;
  std::size_t keys = 100, batch = 100;
  std::uint64_t seed = 1;
  bool include_true = false;
};

int cmd_bruteforce(const BruteArgs& a) {
  const auto cfg = load_config(a.config);
  if (!fs::exists(fs::path(a.checkpoint) / "model.json"))
    throw UsageError("no classifier checkpoint at " + a.checkpoint);
  if (a.keys == 0 || a.batch == 0) throw UsageError("--keys and --batch must be positive");
  const auto target = linac::pipeline::load(a.checkpoint);
  if (target.transform.kind == linac::transforms::TransformKind::kNone)
    throw UsageError("checkpoint has no keyed transform");
  const auto started = utc_now();
  auto splits = linac::config::load_splits(cfg.dataset);
  const auto batch = splits.test.slice(0, std::min(a.batch, splits.test.size()));

  linac::RngStream s = linac::derive_stream(linac::PrivateKey{static_cast<std::int64_t>(a.seed)},
                                            linac::StreamLabel::data(11));
  std::vector<linac::PrivateKey> keys;
  for (std::size_t i = 0; i < a.keys; ++i) {
    linac::PrivateKey k{static_cast<std::int64_t>(s.next_u64())};
    if (k != target.transform.key()) keys.push_back(k);
  }
  std::size_t true_at = keys.size();
  if (a.include_true) {
    true_at = static_cast<std::size_t>(s.next_below(keys.size() + 1));
    keys.insert(keys.begin() + static_cast<std::ptrdiff_t>(true_at), target.transform.key());
  }
  const auto table =
      linac::attacks::brute_force_keys(target.model.stage(), target.stats, target.transform, keys, batch, workers());
  std::ostringstream os;
  os << "rank,index,key,accuracy,true_key\n" << std::setprecision(12);
  for (std::size_t r = 0; r < table.size(); ++r)
    os << r + 1 << ',' << table[r].index << ',' << table[r].key.value << ',' << table[r].accuracy << ','
       << (a.include_true && table[r].index == true_at ? 1 : 0) << '\n';
  const fs::path out = a.out;
  write_text(out / "bruteforce.csv", os.str());
  write_sidecar(out / "run.json", "bruteforce", started);
  std::cout << "top key accuracy " << linac::evaluation::format_percent(table.front().accuracy) << "% ("
            << (a.include_true && table.front().index == true_at ? "true key" : "other key") << ")\n";
  return 0;
}

struct ReportArgs {
  std::vector<std::string> masks;
  std::string out;
};

int cmd_report(const ReportArgs& a) {
  const auto started = utc_now();
  linac::evaluation::CorrectnessMask m;
  for (std::size_t i = 0; i < a.masks.size(); ++i) {
    if (!fs::exists(a.masks[i])) throw UsageError("mask file not found: " + a.masks[i]);
    auto next = linac::evaluation::load_masks(a.masks[i]);
    if (i == 0)
      m = std::move(next);
    else
      m.merge(next);
  }
  const auto r = linac::evaluation::emit_report(a.out, m, {{"masks", a.masks}});
  write_sidecar(a.out + ".run.json", "report", started);
  std::cout << linac::evaluation::report_csv(r);
  return 0;
}

struct SweepArgs {
  std::string config, param, out;
  std::vector<std::size_t> values;
  std::size_t count = 0;
};

void set_param(linac::config::ExperimentConfig& c, const std::string& p, std::size_t v) {
  if (p == "F") c.transform.arch.freqs = v;
  else if (p == "L") c.transform.arch.layers = v;
  else if (p == "K") c.transform.repr_layer = v;
  else if (p == "N") c.transform.fit.epochs = v;
}

int cmd_sweep(const SweepArgs& a) {
  const auto base = load_config(a.config);
  if (base.transform.kind != linac::transforms::TransformKind::kLinac)
    throw UsageError("sweep needs a linac transform in " + a.config);
  std::vector<linac::config::AttackSpec> pgd;
  for (const auto& at : base.attacks)
    if (at.config.kind == linac::attacks::AttackKind::kPgd) pgd.push_back(at);
  if (pgd.empty())
    pgd.push_back({"pgd-linf", linac::attacks::PerturbationBudget::linf(8.0 / 255.0),
                   linac::attacks::AttackConfig::pgd(20, 1), {linac::config::SourceKind::kBpda}});
  std::vector<linac::config::ExperimentConfig> runs;
  for (std::size_t v : a.values) {
    auto c = base;
    set_param(c, a.param, v);
    c.attacks = pgd;
    try {
      c.transform.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(a.param + "=" + std::to_string(v) + ": " + e.what());
    }
    runs.push_back(std::move(c));
  }
  const auto started = utc_now();
  auto splits = linac::config::load_splits(base.dataset);
  if (a.count && a.count < splits.test.size()) splits.test = splits.test.slice(0, a.count);
  const fs::path out = a.out;
  std::ostringstream table;
  table << "param,value,clean_accuracy,robust_accuracy\n";
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const fs::path dir = out / (a.param + "=" + std::to_string(a.values[i]));
    std::cerr << "sweep " << a.param << "=" << a.values[i] << '\n';
    const auto t = linac::pipeline::cached(dir / "classifier", splits.train, runs[i].transform, runs[i].classifier,
                                           runs[i].train, workers());
    linac::pipeline::SourceContext ctx{&t, &splits.train, &runs[i], workers(), dir / "sources"};
    const auto rep = linac::pipeline::run_attacks(runs[i], ctx, splits.test, &std::cerr);
    linac::evaluation::save_masks(dir / "masks.csv", rep.mask);
    const auto r = linac::evaluation::emit_report(dir / "report", rep.mask);
    table << a.param << ',' << a.values[i] << ',' << linac::evaluation::format_percent(r.clean) << ','
          << linac::evaluation::format_percent(r.best_known) << '\n';
  }
  write_text(out / "sweep.csv", table.str());
  write_sidecar(out / "run.json", "sweep", started);
  std::cout << table.str();
  return 0;
}

struct CharArgs {
  std::string dataset, config, key, out;
  std::size_t count = 10, other_keys = 1, bins = 20;
};

int cmd_characterise(const CharArgs& a) {
  const auto cfg = load_config(a.config);
  const auto key = parse_key(a.key);
  if (cfg.transform.kind != linac::transforms::TransformKind::kLinac &&
      cfg.transform.kind != linac::transforms::TransformKind::kLinacReconstruction)
    throw UsageError("characterise needs a linac transform in " + a.config);
  const auto ds = read_dataset(a.dataset);
  const auto started = utc_now();
  const std::size_t n = std::min(a.count, ds.size());
  const auto stats = linac::transforms::fit_normalization(ds.images);
  const auto normalized = linac::transforms::apply_normalization(ds.images.slice(0, n), stats);
  auto fit = cfg.transform.fit;
  fit.key = key;
  const auto& arch = cfg.transform.arch;
  const std::size_t K = cfg.transform.kind == linac::transforms::TransformKind::kLinac ? cfg.transform.repr_layer
                                                                                         : arch.layers;
  linac::RngStream ks = linac::derive_stream(key, linac::StreamLabel::data(12));
  std::vector<linac::PrivateKey> others;
  for (std::size_t i = 0; i < a.other_keys; ++i) others.push_back({static_cast<std::int64_t>(ks.next_u64())});

  std::vector<std::vector<linac::inr::TraceEntry>> traces(n);
  std::vector<double> errors(n);
  std::vector<std::vector<linac::evaluation::KeyDifference>> diffs(n);
  linac::parallel_for(n, workers(), [&](std::size_t i) {
    const linac::Tensor<float> img = normalized.slice(i, 1).reshaped(ds.image_dims());
    auto r = linac::inr::fit_inr<float>(img, fit, arch, true);
    const auto rows = img.dim(0), cols = img.dim(1);
    errors[i] = linac::inr::reconstruction_error(linac::inr::reconstruct(r.inr, rows, cols), img);
    traces[i] = std::move(r.trace);
    const auto mine = linac::inr::activation_image(r.inr, rows, cols, K);
    for (const auto& o : others) {
      auto f = fit;
      f.key = o;
      const auto theirs = linac::inr::activation_image(linac::inr::fit_inr<float>(img, f, arch, false).inr, rows, cols, K);
      diffs[i].push_back(linac::evaluation::key_difference(i, key, o, mine, theirs));
    }
  });
  std::vector<linac::evaluation::KeyDifference> flat;
  for (auto& d : diffs) flat.insert(flat.end(), d.begin(), d.end());
  const auto s = linac::evaluation::characterisation_dump(a.out, traces, errors, flat, a.bins);
  write_sidecar(fs::path(a.out) / "run.json", "characterise", started);
  std::cout << "mean final error " << s.mean_final_error << " over " << n << " images\n";
  return 0;
}

int cmd_config(const std::string& name, const std::string& out) {
  const auto c = linac::config::preset(name);
  if (!c) throw UsageError("unknown preset '" + name + "' (paper-appendix-a, desk-small)");
  const std::string text = linac::config::to_json(*c).dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    write_text(out, text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  g_argv.assign(argv, argv + argc);
  CLI::App app{"LINAC: keyed implicit-network preprocessing and adaptive attacks"};
  app.require_subcommand(1);
  app.add_option("--workers", g_workers, "worker threads (default: LINAC_WORKERS or 1)");

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "generate the synthetic 10-class dataset");
  c_synth->add_option("--count", synth.count)->check(CLI::PositiveNumber);
  c_synth->add_option("--size", synth.size)->check(CLI::PositiveNumber);
  c_synth->add_option("--seed", synth.seed);
  c_synth->add_option("--out", synth.out, "output stem")->required();

  ImportArgs imp;
  auto* c_import = app.add_subcommand("import-cifar", "convert CIFAR-10 binary batches to LNT1");
  c_import->add_option("--input", imp.inputs, "batch files")->required();
  c_import->add_option("--max", imp.max);
  c_import->add_option("--out", imp.out, "output stem")->required();

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "fit an implicit network to one image");
  c_fit->add_option("--image", fit.image, "CIFAR-10 .bin or LNT1 image")->required();
  c_fit->add_option("--index", fit.index, "record within --image");
  c_fit->add_option("--key", fit.key, "private key (signed 64-bit)")->required();
  c_fit->add_option("--epochs", fit.fit.epochs);
  c_fit->add_option("--batch", fit.fit.batch);
  c_fit->add_option("--lr", fit.fit.lr);
  c_fit->add_option("--alpha", fit.fit.alpha);
  c_fit->add_option("--layers", fit.arch.layers);
  c_fit->add_option("--width", fit.arch.width);
  c_fit->add_option("--freqs", fit.arch.freqs);
  auto* repr = c_fit->add_option("--repr-layer", fit.repr_layer, "0-based hidden layer");
  c_fit->add_flag("--reconstruction", fit.reconstruction, "output the colour layer (K = L)");
  c_fit->add_option("--out", fit.out)->required();

  TransformArgs tr;
  auto* c_tr = app.add_subcommand("transform", "apply a keyed transform to a dataset");
  c_tr->add_option("--dataset", tr.dataset, "input stem")->required();
  c_tr->add_option("--key", tr.key)->required();
  c_tr->add_option("--config", tr.config)->required();
  c_tr->add_option("--stats", tr.stats, "classifier checkpoint whose normalisation to use");
  c_tr->add_option("--out", tr.out, "output stem")->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "train a classifier behind the configured transform");
  c_train->add_option("--config", train.config)->required();
  c_train->add_option("--out", train.out);

  AttackArgs att;
  auto* c_att = app.add_subcommand("attack", "run the configured attack list");
  c_att->add_option("--config", att.config)->required();
  c_att->add_option("--checkpoint", att.checkpoint)->required();
  c_att->add_option("--count", att.count, "test examples (default: all)");
  c_att->add_option("--out", att.out);

  BruteArgs bf;
  auto* c_bf = app.add_subcommand("bruteforce", "score random keys against a trained classifier");
  c_bf->add_option("--config", bf.config)->required();
  c_bf->add_option("--checkpoint", bf.checkpoint)->required();
  c_bf->add_option("--keys", bf.keys);
  c_bf->add_option("--batch", bf.batch);
  c_bf->add_option("--seed", bf.seed);
  c_bf->add_flag("--include-true-key", bf.include_true);
  c_bf->add_option("--out", bf.out)->required();

  ReportArgs rep;
  auto* c_rep = app.add_subcommand("report", "merge correctness masks into a robust-accuracy table");
  c_rep->add_option("--masks", rep.masks)->required();
  c_rep->add_option("--out", rep.out, "output stem")->required();

  SweepArgs sw;
  auto* c_sw = app.add_subcommand("sweep", "retrain and attack per hyperparameter value");
  c_sw->add_option("--config", sw.config)->required();
  c_sw->add_option("--param", sw.param)->required()->check(CLI::IsMember({"F", "L", "K", "N"}));
  c_sw->add_option("--values", sw.values)->required()->delimiter(',');
  c_sw->add_option("--count", sw.count, "test examples (default: all)");
  c_sw->add_option("--out", sw.out)->required();

  CharArgs ch;
  auto* c_ch = app.add_subcommand("characterise", "encoding-error statistics and learning curves");
  c_ch->add_option("--dataset", ch.dataset)->required();
  c_ch->add_option("--config", ch.config)->required();
  c_ch->add_option("--key", ch.key)->required();
  c_ch->add_option("--count", ch.count);
  c_ch->add_option("--other-keys", ch.other_keys);
  c_ch->add_option("--bins", ch.bins)->check(CLI::PositiveNumber);
  c_ch->add_option("--out", ch.out)->required();

  std::string preset_name, preset_out;
  auto* c_cfg = app.add_subcommand("config", "print a named preset as JSON");
  c_cfg->add_option("--preset", preset_name)->required();
  c_cfg->add_option("--out", preset_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_import) return cmd_import(imp);
    if (*c_fit) {
      fit.repr_given = repr->count() > 0;
      return cmd_fit(fit);
    }
    if (*c_tr) return cmd_transform(tr);
    if (*c_train) return cmd_train(train);
    if (*c_att) return cmd_attack(att);
    if (*c_bf) return cmd_bruteforce(bf);
    if (*c_rep) return cmd_report(rep);
    if (*c_sw) return cmd_sweep(sw);
    if (*c_ch) return cmd_characterise(ch);
    if (*c_cfg) return cmd_config(preset_name, preset_out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const linac::json_io::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
