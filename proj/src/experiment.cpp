#include "icevae/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include "icevae/baselines.hpp"
#include "icevae/errors.hpp"
#include "icevae/random.hpp"

namespace icevae::experiment {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

const std::vector<std::string> kHyperFields = {"d_z",        "hidden_width", "n_layers",      "learning_rate", "batch_size",
                                               "epochs",     "mc_samples",   "training_mode", "encoder_uses_observed_s"};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void apply_field(Hyperparams& hp, const std::string& key, const json& v) {
  if (key == "d_z") hp.d_z = v.get<std::size_t>();
  else if (key == "hidden_width") hp.hidden_width = v.get<std::size_t>();
  else if (key == "n_layers") hp.n_layers = v.get<std::size_t>();
  else if (key == "learning_rate") hp.learning_rate = v.get<double>();
  else if (key == "batch_size") hp.batch_size = v.get<std::size_t>();
  else if (key == "epochs") hp.epochs = v.get<std::size_t>();
  else if (key == "mc_samples") hp.mc_samples = v.get<std::size_t>();
  else if (key == "training_mode") hp.training_mode = parse_training_mode(v.get<std::string>());
  else if (key == "encoder_uses_observed_s") hp.encoder_uses_observed_s = v.get<bool>();
  else throw ConfigError("unknown hyperparameter '" + key + "'");
}

}  // namespace

std::uint64_t replication_seed(std::uint64_t master, std::size_t r) { return derive_seed(master, r); }

fs::path dataset_path(const fs::path& out, const std::string& cell, std::size_t rep) {
  return out / "datasets" / (cell + "_rep" + std::to_string(rep) + ".csv");
}

// ---------------------------------------------------------------------------
// Configuration

ExperimentConfig ExperimentConfig::named(const std::string& name) {
  if (std::find(kExperiments.begin(), kExperiments.end(), name) == kExperiments.end()) {
    throw ConfigError("unknown experiment '" + name + "'");
  }
  ExperimentConfig c;
  c.experiment = name;
  c.output_dir = fs::path("out") / name;
  if (name == "custom") c.scenarios = {1};
  if (name == "du_sweep") c.export_scatter = true;
  return c;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig c = named(j.value("experiment", std::string("custom")));
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "experiment") continue;
      else if (key == "scenarios") c.scenarios = v.get<std::vector<int>>();
      else if (key == "methods") c.methods = v.get<std::vector<std::string>>();
      else if (key == "replications") c.replications = v.get<std::size_t>();
      else if (key == "master_seed") c.master_seed = v.get<std::uint64_t>();
      else if (key == "n_o") c.n_o = v.get<std::size_t>();
      else if (key == "n_e") c.n_e = v.get<std::size_t>();
      else if (key == "beta") c.beta = v.get<double>();
      else if (key == "d_u_levels") c.d_u_levels = v.get<int>();
      else if (key == "betas") c.betas = v.get<std::vector<double>>();
      else if (key == "du_levels") c.du_levels = v.get<std::vector<int>>();
      else if (key == "n_e_values") c.n_e_values = v.get<std::vector<std::size_t>>();
      else if (key == "test_fraction") c.test_fraction = v.get<double>();
      else if (key == "export_scatter") c.export_scatter = v.get<bool>();
      else if (key == "output_dir") c.output_dir = v.get<std::string>();
      else if (key == "hyperparameters") {
        if (!v.is_object()) throw ConfigError("hyperparameters must be an object");
        c.hyperparameters = ojson::object();
        for (const auto& field : kHyperFields) {
          if (v.contains(field)) c.hyperparameters[field] = v.at(field);
        }
        for (const auto& [hk, hv] : v.items()) {
          if (std::find(kHyperFields.begin(), kHyperFields.end(), hk) == kHyperFields.end()) {
            throw ConfigError("unknown hyperparameter '" + hk + "'");
          }
        }
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  try {
    return from_json(read_json(path));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
}

ojson ExperimentConfig::to_json() const {
  ojson j;
  j["experiment"] = experiment;
  j["scenarios"] = scenarios;
  j["methods"] = methods;
  j["replications"] = replications;
  j["master_seed"] = master_seed;
  j["n_o"] = n_o;
  j["n_e"] = n_e;
  j["beta"] = beta;
  j["d_u_levels"] = d_u_levels;
  j["betas"] = betas;
  j["du_levels"] = du_levels;
  j["n_e_values"] = n_e_values;
  j["test_fraction"] = test_fraction;
  j["export_scatter"] = export_scatter;
  j["output_dir"] = output_dir.generic_string();
  ojson hp = ojson::object();
  for (const auto& field : kHyperFields) {
    if (hyperparameters.contains(field)) hp[field] = hyperparameters.at(field);
  }
  j["hyperparameters"] = hp;
  return j;
}

void ExperimentConfig::validate() const {
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (methods.empty()) throw ConfigError("at least one method is required");
  for (const auto& m : methods) {
    if (std::find(kMethods.begin(), kMethods.end(), m) == kMethods.end()) {
      throw ConfigError("unknown method '" + m + "'");
    }
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  for (const auto& c : cells()) c.synth.validate();
  (void)grid();
}

std::vector<Cell> ExperimentConfig::cells() const {
  std::vector<Cell> out;
  auto base = [&](int scenario) {
    data::SynthConfig s;
    s.scenario = scenario;
    s.n_o = n_o;
    s.n_e = n_e;
    return s;
  };
  if (experiment == "beta_sweep") {
    for (double b : betas) {
      auto s = base(4);
      s.beta = b;
      out.push_back({"beta_" + shortest(b), s});
    }
  } else if (experiment == "du_sweep") {
    for (int d : du_levels) {
      auto s = base(5);
      s.d_u_levels = d;
      out.push_back({"du_" + std::to_string(d), s});
    }
  } else if (experiment == "expsize_sweep") {
    for (std::size_t ne : n_e_values) {
      auto s = base(1);
      s.n_e = ne;
      out.push_back({"ne_" + std::to_string(ne), s});
    }
  } else {
    for (int sc : scenarios) {
      auto s = base(sc);
      if (experiment == "custom") {
        s.beta = beta;
        s.d_u_levels = d_u_levels;
      }
      out.push_back({"synthetic" + std::to_string(sc), s});
    }
  }
  if (out.empty()) throw ConfigError("experiment '" + experiment + "' has no cells");
  return out;
}

std::vector<Hyperparams> ExperimentConfig::grid() const {
  std::vector<Hyperparams> points{Hyperparams{}};
  try {
    for (const auto& field : kHyperFields) {
      if (!hyperparameters.contains(field)) continue;
      const auto& v = hyperparameters.at(field);
      std::vector<json> options;
      if (v.is_array()) {
        for (const auto& o : v) options.push_back(json(o));
      } else {
        options.push_back(json(v));
      }
      if (options.empty()) throw ConfigError("hyperparameter '" + field + "' has an empty grid");
      std::vector<Hyperparams> next;
      for (const auto& p : points) {
        for (const auto& o : options) {
          Hyperparams h = p;
          apply_field(h, field, o);
          next.push_back(h);
        }
      }
      points = std::move(next);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("hyperparameters: ") + e.what());
  }
  for (const auto& p : points) p.validate();
  return points;
}

std::string ExperimentConfig::hash() const {
  // The output location does not change what is computed.
  ojson j = to_json();
  j.erase("output_dir");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : j.dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::uint64_t> ExperimentConfig::replication_seeds() const {
  std::vector<std::uint64_t> seeds;
  for (std::size_t r = 0; r < replications; ++r) seeds.push_back(replication_seed(master_seed, r));
  return seeds;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalInputs prepare(const data::Dataset& ds, const data::GroundTruth& truth, double test_fraction,
                   std::uint64_t split_seed) {
  auto parts = data::split(ds, truth, test_fraction, split_seed);
  EvalInputs in;
  in.obs_train = parts.train.group(data::Group::observational);
  in.exp = parts.train.group(data::Group::experimental);
  in.test = std::move(parts.test);
  in.test_truth = std::move(parts.test_truth);
  return in;
}

eval::ReplicationResult evaluate_method(const std::string& method, const EvalInputs& in, const Hyperparams& hp,
                                        std::uint64_t seed, const std::optional<fs::path>& scatter_path) {
  std::vector<double> tau_true;
  for (const auto& t : in.test_truth.rows) tau_true.push_back(t.tau);
  const double ate_true = std::accumulate(tau_true.begin(), tau_true.end(), 0.0) / static_cast<double>(tau_true.size());

  Hyperparams h = hp;
  h.seed = seed;
  eval::ReplicationResult res;
  res.seed = seed;
  std::optional<std::vector<double>> ite;
  double ate_hat = 0.0;

  if (method == "icevae") {
    TrainedIcevae model = train(in.obs_train, in.exp, h);
    ite = infer_ite(model, in.test);
    if (in.test_truth.d_z > 0) {
      Tensor z_true = Tensor::matrix(in.test.size(), in.test_truth.d_z);
      for (std::size_t i = 0; i < in.test.size(); ++i) {
        for (std::size_t k = 0; k < in.test_truth.d_z; ++k) z_true(i, k) = in.test_truth[i].z[k];
      }
      const Tensor z_hat = latent_means(model, in.test);
      if (z_hat.cols() == z_true.cols()) {
        const auto m = eval::mcc(z_true, z_hat);
        res.mcc = m.score;
        if (scatter_path) {
          fs::create_directories(scatter_path->parent_path());
          eval::scatter_export(z_true, z_hat, m, scatter_path->string());
        }
      }
    }
  } else if (method == "s_learner") {
    ite = baselines::ite_on(baselines::s_learner(in.obs_train, h), in.test);
  } else if (method == "t_learner") {
    ite = baselines::ite_on(baselines::t_learner(in.obs_train, h), in.test);
  } else if (method == "equi_naive") {
    ite = baselines::ite_on(baselines::equi_naive(in.obs_train, in.exp, h), in.test);
  } else if (method == "imputation") {
    ate_hat = baselines::imputation(in.obs_train, in.exp, h).ate;
  } else {
    throw ConfigError("unknown method '" + method + "'");
  }

  if (ite) {
    ate_hat = std::accumulate(ite->begin(), ite->end(), 0.0) / static_cast<double>(ite->size());
    res.pehe = eval::pehe(tau_true, *ite);
  }
  res.ate_error = eval::ate_error(ate_true, ate_hat);
  return res;
}

// ---------------------------------------------------------------------------
// Commands

void write_manifest(const ExperimentConfig& config) {
  const fs::path out = config.output_dir;
  std::vector<std::string> files;
  if (fs::exists(out)) {
    for (const auto& e : fs::recursive_directory_iterator(out)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), out).generic_string();
      if (rel != "manifest.json") files.push_back(rel);
    }
  }
  std::sort(files.begin(), files.end());
  ojson m;
  m["code_version"] = kCodeVersion;
  m["experiment"] = config.experiment;
  m["config_hash"] = config.hash();
  m["master_seed"] = config.master_seed;
  m["seed_scheme"] =
      "replication r uses seed derive_seed(master_seed, r) (SplitMix64); datasets, splits and model "
      "initialization derive further streams from that seed";
  m["replication_seeds"] = config.replication_seeds();
  m["config"] = config.to_json();
  m["files"] = files;
  write_text(out / "manifest.json", m.dump(2) + "\n");
}

void cmd_generate(const ExperimentConfig& config) {
  config.validate();
  const auto seeds = config.replication_seeds();
  for (const auto& cell : config.cells()) {
    for (std::size_t r = 0; r < seeds.size(); ++r) {
      data::SynthConfig synth = cell.synth;
      synth.seed = seeds[r];
      const auto [ds, truth] = data::generate(synth);
      const fs::path path = dataset_path(config.output_dir, cell.name, r);
      fs::create_directories(path.parent_path());
      data::write_csv(ds, &truth, path);
      data::write_sidecar(synth, path);
    }
  }
  write_manifest(config);
}

namespace {

struct Job {
  std::size_t cell;
  std::size_t grid_point;
  std::size_t rep;
  std::size_t method;
};

std::string report_tag(const std::string& cell, std::size_t grid_point, std::size_t grid_size) {
  return grid_size > 1 ? cell + "__g" + std::to_string(grid_point) : cell;
}

}  // namespace

std::vector<eval::MetricsReport> cmd_run(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  const auto cells = config.cells();
  auto grid = config.grid();
  if (options.mode) {
    for (auto& h : grid) h.training_mode = *options.mode;
  }
  const auto seeds = config.replication_seeds();

  // Load every dataset up front so a missing file fails before any training.
  std::vector<std::vector<EvalInputs>> inputs(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t r = 0; r < seeds.size(); ++r) {
      const fs::path path = dataset_path(config.output_dir, cells[c].name, r);
      if (!fs::exists(path)) throw ConfigError("missing dataset " + path.string() + " (run generate first)");
      auto loaded = data::read_csv(path);
      if (!loaded.truth) throw ConfigError("dataset " + path.string() + " has no ground-truth columns");
      inputs[c].push_back(prepare(loaded.data, *loaded.truth, config.test_fraction, derive_seed(seeds[r], 7)));
    }
  }

  std::vector<Job> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      for (std::size_t r = 0; r < seeds.size(); ++r) {
        for (std::size_t m = 0; m < config.methods.size(); ++m) jobs.push_back({c, g, r, m});
      }
    }
  }

  std::vector<eval::ReplicationResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      try {
        const std::string& method = config.methods[job.method];
        std::optional<fs::path> scatter;
        if (config.export_scatter && method == "icevae") {
          scatter = config.output_dir / "scatter" /
                    (report_tag(cells[job.cell].name, job.grid_point, grid.size()) + "_rep" +
                     std::to_string(job.rep) + ".csv");
        }
        auto res = evaluate_method(method, inputs[job.cell][job.rep], grid[job.grid_point],
                                   derive_seed(seeds[job.rep], 1000 + job.grid_point), scatter);
        res.seed = seeds[job.rep];
        results[i] = res;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(options.jobs, jobs.size()));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
  }
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (!errors[i]) continue;
    const Job& job = jobs[i];
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw TrainingError(config.methods[job.method] + " on " + cells[job.cell].name + " replication " +
                          std::to_string(job.rep) + ": " + e.what());
    }
  }

  std::vector<eval::MetricsReport> reports;
  std::size_t i = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t g = 0; g < grid.size(); ++g) {
      std::vector<std::vector<eval::ReplicationResult>> per_method(config.methods.size());
      for (std::size_t r = 0; r < seeds.size(); ++r) {
        for (std::size_t m = 0; m < config.methods.size(); ++m) per_method[m].push_back(results[i++]);
      }
      const std::string tag = report_tag(cells[c].name, g, grid.size());
      for (std::size_t m = 0; m < config.methods.size(); ++m) {
        auto rep = eval::aggregate(config.methods[m], tag, per_method[m]);
        write_text(config.output_dir / "reports" / tag / (config.methods[m] + ".json"), rep.to_json().dump(2) + "\n");
        reports.push_back(std::move(rep));
      }
    }
  }
  write_manifest(config);
  return reports;
}

namespace {

std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

std::string cell_text(const std::optional<eval::Summary>& s) {
  return s ? fixed3(s->mean) + "±" + fixed3(s->std) : "-";
}

std::size_t display_width(const std::string& s) {
  // Counts UTF-8 code points so the ± sign occupies one column.
  return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) { return (c & 0xC0) != 0x80; }));
}

}  // namespace

std::string cmd_report(const fs::path& dir) {
  const fs::path manifest = dir / "manifest.json";
  const fs::path reports_dir = dir / "reports";
  if (!fs::exists(reports_dir) || fs::is_empty(reports_dir)) {
    throw ConfigError("no reports under " + dir.string() + " (run the experiment first)");
  }
  if (!fs::exists(manifest)) throw ConfigError("missing " + manifest.string());
  ExperimentConfig config = ExperimentConfig::from_json(read_json(manifest).at("config"));
  config.output_dir = dir;

  const auto grid_size = config.grid().size();
  std::vector<eval::MetricsReport> reports;
  for (const auto& cell : config.cells()) {
    for (std::size_t g = 0; g < grid_size; ++g) {
      const std::string tag = report_tag(cell.name, g, grid_size);
      for (const auto& m : config.methods) {
        const fs::path p = reports_dir / tag / (m + ".json");
        if (fs::exists(p)) reports.push_back(eval::MetricsReport::from_json(read_json(p)));
      }
    }
  }
  if (reports.empty()) throw ConfigError("no reports under " + dir.string() + " match its manifest");

  std::ostringstream csv;
  csv << "setting,method,ate_error_mean,ate_error_std,pehe_mean,pehe_std,mcc_mean,mcc_std\n";
  std::vector<std::vector<std::string>> rows{{"setting", "method", "ate_error", "pehe", "mcc"}};
  for (const auto& r : reports) {
    auto pair = [](const std::optional<eval::Summary>& s) {
      return s ? fixed3(s->mean) + "," + fixed3(s->std) : std::string("-,-");
    };
    csv << r.scenario << ',' << r.method << ',' << pair(r.ate) << ',' << pair(r.pehe) << ',' << pair(r.mcc) << '\n';
    rows.push_back({r.scenario, r.method, cell_text(r.ate), cell_text(r.pehe), cell_text(r.mcc)});
  }
  std::vector<std::size_t> widths(rows.front().size(), 0);
  for (const auto& row : rows) {
    for (std::size_t k = 0; k < row.size(); ++k) widths[k] = std::max(widths[k], display_width(row[k]));
  }
  std::ostringstream text;
  for (const auto& row : rows) {
    std::string line;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k > 0) line += "  ";
      line += row[k];
      if (k + 1 < row.size()) line += std::string(widths[k] - display_width(row[k]), ' ');
    }
    text << line << '\n';
  }
  write_text(dir / "tables" / (config.experiment + ".csv"), csv.str());
  write_text(dir / "tables" / (config.experiment + ".txt"), text.str());
  write_manifest(config);
  return text.str();
}

void reproduce(const fs::path& out, std::uint64_t master_seed, const RunOptions& options) {
  for (const std::string name : {"table1", "beta_sweep", "du_sweep", "expsize_sweep"}) {
    ExperimentConfig config = ExperimentConfig::named(name);
    config.master_seed = master_seed;
    config.output_dir = out / name;
    cmd_generate(config);
    cmd_run(config, options);
    std::cout << "== " << name << '\n' << cmd_report(config.output_dir);
  }
}

}  // namespace icevae::experiment
