// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <functional>
#include <ostream>

#include "dmrom/dmaps.hpp"
#include "dmrom/error.hpp"
#include "dmrom/io.hpp"
#include "dmrom/lifting.hpp"
#include "dmrom/log.hpp"
#include "dmrom/parsimony.hpp"
#include "dmrom/rom_koopman.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace dmrom::pipeline {

// ---------------------------------------------------------------------------
// Configuration

void RunConfig::set_seed(std::uint64_t s) {
  seed = s;
  fnn.seed = s;
  if (synth && !synth_seed_explicit) synth->seed = s;
}

json RunConfig::to_json() const {
  json j;
  j["input"] = input.string();
  j["output_dir"] = output_dir.string();
  j["seed"] = seed;
  if (synth) {
    j["synth"] = {{"q", synth->intrinsic_dim},
                  {"M", synth->ambient_dim},
                  {"N", synth->n_times},
                  {"noise", synth->noise},
                  {"seed", synth->seed},
                  {"dynamics", to_string(synth->dynamics)},
                  {"angular_step", synth->angular_step},
                  {"contraction", synth->contraction},
                  {"feature_scale", synth->feature_scale},
                  {"initial_radius", synth->initial_radius},
                  {"initial_offset", synth->initial_offset}};
  }
  if (stimulus) j["stimulus"] = stimulus->string();
  j["drop_dead_channels"] = drop_dead_channels;
  j["standardize_train_only"] = standardize_train_only;
  j["split"] = {{"n_train", split.n_train}};
  json g = {{"contrast", glm.contrast}, {"threshold", glm.threshold}};
  if (glm.epochs) {
    json epochs = json::array();
    for (const auto& e : glm.epochs->epochs)
      epochs.push_back({{"condition", e.condition}, {"start", e.start}, {"end", e.end}});
    g["conditions"] = glm.epochs->conditions;
    g["epochs"] = epochs;
  }
  if (glm.hrf_kernel) g["hrf_kernel"] = glm.hrf_kernel->string();
  j["glm"] = g;
  j["dmaps"] = {{"sigma", dmaps.sigma ? json(*dmaps.sigma) : json("auto")},
                {"alpha", dmaps.alpha},
                {"t", dmaps.t},
                {"k", dmaps.k}};
  j["parsimony"] = {{"d", parsimony.d}, {"scale_fraction", parsimony.scale_fraction}};
  json f = train_config_to_json(fnn);
  f.erase("seed");
  f["use_stimulus"] = fnn_use_stimulus;
  j["fnn"] = f;
  j["koopman"] = {{"svd_tol", koopman.svd_tol},
                  {"stimulus_observables", koopman.stimulus_observables},
                  {"reduced_modes", koopman.reduced_modes}};
  j["gh"] = {{"sigma", gh.sigma ? json(*gh.sigma) : json("auto")}, {"eig_floor", gh.eig_floor}};
  j["nrw"] = {{"mode", to_string(nrw_mode)}};
  return j;
}

std::string RunConfig::hash() const {
  json j = to_json();
  j.erase("output_dir");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xF];
  return out;
}

namespace {

std::optional<double> sigma_value(const json& j, const std::string& what) {
  if (j.is_string()) {
    if (j.get<std::string>() == "auto") return std::nullopt;
    throw ValidationError(what + ": expected a positive number or \"auto\"");
  }
  const double s = j.get<double>();
  if (!(s > 0.0)) throw ValidationError(what + " must be positive");
  return s;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& section) {
  if (!j.is_object()) throw ValidationError(section + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ValidationError("unknown key \"" + key + "\" in " + section);
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
  RunConfig c;
  try {
    check_keys(j, {"input", "output_dir", "seed", "synth", "stimulus", "drop_dead_channels",
                   "standardize_train_only", "split", "glm", "dmaps", "parsimony", "fnn", "koopman", "gh", "nrw"},
               "run config");
    c.input = resolve(base_dir, j.value("input", std::string{}));
    c.output_dir = resolve(base_dir, j.value("output_dir", std::string{"run"}));
    c.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      check_keys(s, {"q", "M", "N", "noise", "seed", "dynamics", "angular_step", "contraction", "feature_scale",
                     "initial_radius", "initial_offset"},
                 "synth");
      SynthConfig sc;
      sc.intrinsic_dim = s.value("q", sc.intrinsic_dim);
      sc.ambient_dim = s.value("M", sc.ambient_dim);
      sc.n_times = s.value("N", sc.n_times);
      sc.noise = s.value("noise", sc.noise);
      sc.dynamics = parse_dynamics(s.value("dynamics", to_string(sc.dynamics)));
      sc.angular_step = s.value("angular_step", sc.angular_step);
      sc.contraction = s.value("contraction", sc.contraction);
      sc.feature_scale = s.value("feature_scale", sc.feature_scale);
      sc.initial_radius = s.value("initial_radius", sc.initial_radius);
      sc.initial_offset = s.value("initial_offset", sc.initial_offset);
      c.synth_seed_explicit = s.contains("seed");
      sc.seed = s.value("seed", c.seed);
      c.synth = sc;
    }
    if (j.contains("stimulus")) c.stimulus = resolve(base_dir, j.at("stimulus").get<std::string>());
    c.drop_dead_channels = j.value("drop_dead_channels", false);
    c.standardize_train_only = j.value("standardize_train_only", false);
    if (j.contains("split")) check_keys(j.at("split"), {"n_train"}, "split");
    if (j.contains("split")) c.split.n_train = j.at("split").value("n_train", c.split.n_train);
    if (j.contains("glm")) {
      const auto& g = j.at("glm");
      check_keys(g, {"epochs_file", "epochs", "conditions", "contrast", "threshold", "hrf_kernel"}, "glm");
      if (g.contains("epochs_file")) {
        c.glm.epochs = epoch_config_from_json(
            io::read_json(resolve(base_dir, g.at("epochs_file").get<std::string>())));
      } else if (g.contains("epochs")) {
        c.glm.epochs = epoch_config_from_json(g);
      }
      c.glm.contrast = g.value("contrast", std::vector<double>{});
      c.glm.threshold = g.value("threshold", c.glm.threshold);
      if (g.contains("hrf_kernel") && !g.at("hrf_kernel").is_null()) {
        c.glm.hrf_kernel = resolve(base_dir, g.at("hrf_kernel").get<std::string>());
      }
    }
    if (j.contains("dmaps")) {
      const auto& d = j.at("dmaps");
      check_keys(d, {"sigma", "alpha", "t", "k"}, "dmaps");
      if (d.contains("sigma")) c.dmaps.sigma = sigma_value(d.at("sigma"), "dmaps.sigma");
      c.dmaps.alpha = d.value("alpha", c.dmaps.alpha);
      c.dmaps.t = d.value("t", c.dmaps.t);
      c.dmaps.k = d.value("k", c.dmaps.k);
    }
    if (j.contains("parsimony")) {
      const auto& p = j.at("parsimony");
      check_keys(p, {"d", "scale_fraction"}, "parsimony");
      c.parsimony.d = p.value("d", c.parsimony.d);
      c.parsimony.scale_fraction = p.value("scale_fraction", c.parsimony.scale_fraction);
    }
    if (j.contains("fnn")) {
      check_keys(j.at("fnn"), {"hidden_sizes", "decay_values", "folds", "repeats", "max_epochs", "learning_rate",
                               "tolerance", "optimizer", "threads", "use_stimulus"},
                 "fnn");
      c.fnn = train_config_from_json(j.at("fnn"));
      c.fnn_use_stimulus = j.at("fnn").value("use_stimulus", true);
    }
    if (j.contains("koopman")) {
      const auto& k = j.at("koopman");
      check_keys(k, {"svd_tol", "stimulus_observables", "reduced_modes"}, "koopman");
      c.koopman.svd_tol = k.value("svd_tol", c.koopman.svd_tol);
      c.koopman.stimulus_observables = k.value("stimulus_observables", false);
      c.koopman.reduced_modes = k.value("reduced_modes", c.koopman.reduced_modes);
    }
    if (j.contains("gh")) {
      const auto& g = j.at("gh");
      check_keys(g, {"sigma", "eig_floor"}, "gh");
      if (g.contains("sigma")) c.gh.sigma = sigma_value(g.at("sigma"), "gh.sigma");
      c.gh.eig_floor = g.value("eig_floor", c.gh.eig_floor);
    }
    if (j.contains("nrw")) check_keys(j.at("nrw"), {"mode"}, "nrw");
    if (j.contains("nrw")) c.nrw_mode = parse_nrw_mode(j.at("nrw").value("mode", std::string{"reduced_then_lift"}));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("run config: ") + e.what());
  }
  c.fnn.seed = c.seed;

  if (!(c.dmaps.alpha >= 0.0 && c.dmaps.alpha <= 1.0)) throw ValidationError("dmaps.alpha must lie in [0, 1]");
  if (c.dmaps.t < 0) throw ValidationError("dmaps.t must be non-negative");
  if (c.dmaps.k < 1) throw ValidationError("dmaps.k must be positive");
  if (c.parsimony.d < 1 || c.parsimony.d > c.dmaps.k) {
    throw ValidationError("parsimony.d must satisfy 1 <= d <= dmaps.k");
  }
  if (!(c.parsimony.scale_fraction > 0.0)) throw ValidationError("parsimony.scale_fraction must be positive");
  if (!(c.koopman.svd_tol >= 0.0)) throw ValidationError("koopman.svd_tol must be non-negative");
  if (c.koopman.reduced_modes != "fit" && c.koopman.reduced_modes != "restrict") {
    throw ValidationError("koopman.reduced_modes must be \"fit\" or \"restrict\"");
  }
  if (!(c.gh.eig_floor >= 0.0)) throw ValidationError("gh.eig_floor must be non-negative");
  if (c.split.n_train < 2) throw ValidationError("split.n_train must be at least 2");
  if (c.input.empty() && !c.synth) throw ValidationError("run config needs \"input\" or a \"synth\" section");
  return c;
}

RunConfig load_config(const fs::path& path) {
  return config_from_json(io::read_json(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Locking

RunLock::RunLock(const fs::path& dir) {
  fs::create_directories(dir);
  path_ = dir / ".lock";
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const int err = errno;
    path_.clear();
    if (err == EEXIST) {
      throw ValidationError("run directory '" + dir.string() +
                            "' is locked by another process (remove .lock if stale)");
    }
    throw NumericalError("cannot lock '" + dir.string() + "': " + std::strerror(err));
  }
  ::close(fd);
}

RunLock::~RunLock() {
  if (!path_.empty()) {
    std::error_code ec;
    fs::remove(path_, ec);
  }
}

// ---------------------------------------------------------------------------
// Stages

namespace {

template <class Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError("[" + name + "] " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError("[" + name + "] " + e.what());
  } catch (const std::exception& e) {
    throw NumericalError("[" + name + "] " + e.what());
  }
}

void write_meta(const fs::path& dir, const RunConfig& cfg, json extra = json::object()) {
  fs::create_directories(dir);
  extra["config_hash"] = cfg.hash();
  io::write_json(dir / "meta.json", extra);
}


fs::path input_path(const RunConfig& cfg) {
  if (!cfg.input.empty()) return cfg.input;
  return Layout{cfg.output_dir}.data() / "synthetic.csv";
}

fs::path require(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ValidationError("missing " + what + " '" + p.string() + "'");
  return p;
}

StimulusMatrix load_stimulus(const RunConfig& cfg, Eigen::Index n) {
  if (cfg.glm.epochs) {
    StimulusMatrix u = build_design_matrix(cfg.glm.epochs->epochs, n, cfg.glm.epochs->conditions);
    if (cfg.glm.hrf_kernel) u = convolve_design(u, load_kernel(*cfg.glm.hrf_kernel));
    return u;
  }
  if (cfg.stimulus) {
    auto table = io::read_csv(*cfg.stimulus);
    if (table.values.rows() != n) {
      throw ValidationError("stimulus '" + cfg.stimulus->string() + "' has " +
                            std::to_string(table.values.rows()) + " rows, series has " +
                            std::to_string(n));
    }
    if (!table.values.allFinite()) throw ValidationError("stimulus contains non-finite values");
    return {std::move(table.values), std::move(table.header)};
  }
  return {Eigen::MatrixXd(n, 0), {}};
}

// Loaded once the embed stage has run.
struct EmbeddingArtifacts {
  DiffusionEmbedding embedding;
  ParsimonyReport parsimony;
  TimeSeriesMatrix train;
  TimeSeriesMatrix test;
  Eigen::MatrixXd coords;    // n_train x d, selected coordinates
  StimulusMatrix stimulus;   // N x p, possibly p = 0
};

EmbeddingArtifacts load_embedding(const Layout& layout) {
  const fs::path dir = layout.embedding();
  require(dir / "meta.json", "embedding bundle");
  EmbeddingArtifacts a;
  a.embedding = read_embedding_bundle(dir);
  a.parsimony = parsimony_from_json(io::read_json(require(dir / "parsimony.json", "parsimony report")));
  auto train = io::read_csv(require(dir / "series_train.csv", "training series"));
  auto test = io::read_csv(require(dir / "series_test.csv", "test series"));
  a.train = {std::move(train.values), std::move(train.header), 1.0};
  a.test = {std::move(test.values), std::move(test.header), 1.0};
  a.coords = io::read_csv(require(dir / "coords_train.csv", "training coordinates")).values;
  const Eigen::Index n_all = a.train.n_times() + a.test.n_times();
  if (fs::exists(dir / "stimulus.csv")) {
    auto s = io::read_csv(dir / "stimulus.csv");
    if (s.values.rows() != n_all) {
      throw ValidationError("'" + (dir / "stimulus.csv").string() + "': row count does not match the series");
    }
    a.stimulus = {std::move(s.values), std::move(s.header)};
  } else {
    a.stimulus = {Eigen::MatrixXd(n_all, 0), {}};
  }
  if (a.coords.rows() != a.train.n_times() || a.embedding.eigenvectors.rows() != a.train.n_times()) {
    throw ValidationError("'" + dir.string() + "': training series, coordinates and eigenvectors disagree in length");
  }
  if (a.coords.cols() != static_cast<Eigen::Index>(a.parsimony.selected.size())) {
    throw ValidationError("'" + (dir / "coords_train.csv").string() + "': column count does not match the selection");
  }
  if (a.test.n_channels() != a.train.n_channels()) {
    throw ValidationError("'" + (dir / "series_test.csv").string() + "': channel count differs from training");
  }
  return a;
}

void run_synth(const RunConfig& cfg, std::ostream& log) {
  stage("synth", [&] {
    if (!cfg.synth) throw ValidationError("config has no \"synth\" section");
    const Layout layout{cfg.output_dir};
    auto [x, truth] = generate_synthetic(*cfg.synth);
    fs::create_directories(layout.data());
    const fs::path target = cfg.input.empty() ? layout.data() / "synthetic.csv" : cfg.input;
    if (!target.parent_path().empty()) fs::create_directories(target.parent_path());
    write_timeseries(target, x);
    io::write_json(layout.data() / "truth.json", synth_truth_to_json(truth));
    write_meta(layout.data(), cfg, {{"stage", "synth"}});
    log << "synth: wrote " << x.n_times() << " x " << x.n_channels() << " series to " << target.string() << '\n';
  });
}

TimeSeriesMatrix preprocessed_series(const RunConfig& cfg, std::vector<std::string>* dropped) {
  TimeSeriesMatrix x = stage("ingest", [&] {
    auto raw = load_timeseries(require(input_path(cfg), "input series"));
    if (cfg.split.n_train >= raw.n_times()) {
      throw ValidationError(cfg.split.n_train == raw.n_times()
                                ? "empty test set: n_train equals N = " + std::to_string(raw.n_times())
                                : "n_train = " + std::to_string(cfg.split.n_train) +
                                      " exceeds N = " + std::to_string(raw.n_times()));
    }
    const std::optional<Eigen::Index> fit_rows =
        cfg.standardize_train_only ? std::optional<Eigen::Index>(cfg.split.n_train) : std::nullopt;
    if (cfg.drop_dead_channels) {
      const auto dead = dead_channels(raw, fit_rows);
      if (!dead.empty()) {
        std::string names;
        for (auto c : dead) {
          if (dropped) dropped->push_back(raw.channel_names[c]);
          names += (names.empty() ? "" : ", ") + raw.channel_names[c];
        }
        warn("dropping " + std::to_string(dead.size()) + " dead channel(s): " + names);
        raw = drop_channels(raw, dead);
        if (raw.n_channels() == 0) throw ValidationError("every channel is dead");
      }
    }
    return detrend_standardize(raw, fit_rows);
  });
  return x;
}

void run_glm(const RunConfig& cfg, std::ostream& log) {
  stage("glm", [&] {
    if (!cfg.glm.epochs) throw ValidationError("config has no GLM epochs");
    const Layout layout{cfg.output_dir};
    const TimeSeriesMatrix x = preprocessed_series(cfg, nullptr);
    const StimulusMatrix u = load_stimulus(cfg, x.n_times());
    const GlmFit fit = fit_glm(x, u);
    Eigen::VectorXd c = Eigen::VectorXd::Ones(u.n_conditions());
    if (!cfg.glm.contrast.empty()) {
      c = Eigen::Map<const Eigen::VectorXd>(cfg.glm.contrast.data(),
                                            static_cast<Eigen::Index>(cfg.glm.contrast.size()));
    }
    const ContrastResult r = contrast_tstat(fit, u, c);
    fs::create_directories(layout.reports());
    write_glm_report(layout.reports() / "glm.csv", x, u, fit, r, cfg.glm.threshold);
    write_meta(layout.reports(), cfg);
    Eigen::Index active = 0;
    for (Eigen::Index i = 0; i < r.p_values.size(); ++i) active += r.p_values(i) < cfg.glm.threshold;
    log << "glm: " << active << " of " << r.p_values.size() << " channels pass p < "
        << cfg.glm.threshold << " (uncorrected)\n";
  });
}

void run_embed(const RunConfig& cfg, std::ostream& log) {
  const Layout layout{cfg.output_dir};
  std::vector<std::string> dropped;
  const TimeSeriesMatrix x = preprocessed_series(cfg, &dropped);
  const auto [train, test] = stage("ingest", [&] { return split_train_test(x, cfg.split); });
  const StimulusMatrix stim = stage("stimulus", [&] { return load_stimulus(cfg, x.n_times()); });

  DiffusionEmbedding e = stage("dmaps", [&] {
    const AffinityMatrix w = gaussian_affinity(train.values, cfg.dmaps.sigma);
    const DiffusionOperator p = diffusion_operator(w, cfg.dmaps.alpha);
    DiffusionEmbedding out = spectral_decompose(p, cfg.dmaps.k);
    out.t = cfg.dmaps.t;
    return out;
  });
  const ParsimonyReport report = stage("parsimony", [&] {
    return parsimony_report(e.eigenvectors.rightCols(e.k()), cfg.parsimony.d, cfg.parsimony.scale_fraction);
  });

  stage("embed", [&] {
    const Eigen::MatrixXd all = embed(e, e.t);
    Eigen::MatrixXd coords(all.rows(), static_cast<Eigen::Index>(report.selected.size()));
    std::vector<std::string> names;
    for (std::size_t c = 0; c < report.selected.size(); ++c) {
      coords.col(static_cast<Eigen::Index>(c)) = all.col(report.selected[c] - 1);
      names.push_back("psi_" + std::to_string(report.selected[c]));
    }
    const fs::path dir = layout.embedding();
    write_embedding_bundle(dir, e, {{"config_hash", cfg.hash()}, {"dropped_channels", dropped},
                                    {"n_train", train.n_times()}, {"n_test", test.n_times()}});
    write_timeseries(dir / "series_train.csv", train);
    write_timeseries(dir / "series_test.csv", test);
    io::write_csv(dir / "coords_train.csv", names, coords);
    const fs::path stim_path = dir / "stimulus.csv";
    if (stim.n_conditions() > 0) {
      io::write_csv(stim_path, stim.condition_names, stim.values);
    } else if (fs::exists(stim_path)) {
      fs::remove(stim_path);
    }
    io::write_json(dir / "parsimony.json", parsimony_to_json(report));
  });

  log << "embed: sigma = " << e.sigma << ", eigenvalues:";
  for (Eigen::Index l = 0; l < e.eigenvalues.size(); ++l) log << ' ' << io::format_double(e.eigenvalues(l));
  log << "\nembed: selected";
  for (auto s : report.selected) log << " psi_" << s;
  log << '\n';
}

void run_train(const RunConfig& cfg, TrainMethod method, std::ostream& log) {
  const Layout layout{cfg.output_dir};
  const EmbeddingArtifacts a = stage("train", [&] { return load_embedding(layout); });
  const Eigen::Index n = a.train.n_times();
  const Eigen::Index d = a.coords.cols();
  fs::create_directories(layout.models());
  fs::create_directories(layout.reports());

  if (method == TrainMethod::fnn || method == TrainMethod::both) {
    stage("fnn", [&] {
      const Eigen::MatrixXd stim = cfg.fnn_use_stimulus ? Eigen::MatrixXd(a.stimulus.values.topRows(n))
                                                        : Eigen::MatrixXd(n, 0);
      for (Eigen::Index l = 1; l <= d; ++l) {
        const FnnTrainResult r = fnn_train(a.coords, stim, l, cfg.fnn);
        json doc = fnn_model_to_json(r.model);
        doc["config"] = train_config_to_json(cfg.fnn);
        doc["selected_hidden"] = r.best_hidden;
        doc["selected_decay"] = r.best_decay;
        doc["coordinate"] = "psi_" + std::to_string(a.parsimony.selected[static_cast<std::size_t>(l - 1)]);
        io::write_json(layout.models() / ("fnn_" + std::to_string(l) + ".json"), doc);

        Eigen::MatrixXd table(static_cast<Eigen::Index>(r.records.size()), 5);
        for (std::size_t i = 0; i < r.records.size(); ++i) {
          const auto& rec = r.records[i];
          table.row(static_cast<Eigen::Index>(i)) << static_cast<double>(rec.hidden), rec.decay,
              static_cast<double>(rec.repeat), static_cast<double>(rec.fold), rec.mse;
        }
        io::write_csv(layout.reports() / ("fnn_cv_" + std::to_string(l) + ".csv"),
                      {"H", "decay", "repeat", "fold", "mse"}, table);
        double best_mse = 0.0;
        for (const auto& c : r.cells)
          if (c.hidden == r.best_hidden && c.decay == r.best_decay) best_mse = c.mean_mse;
        log << "fnn: coordinate " << l << " -> H = " << r.best_hidden << ", decay = " << r.best_decay
            << ", cv mse = " << best_mse << '\n';
      }
    });
    stage("gh", [&] {
      const GhLiftModel gh = gh_fit(a.coords, a.train.values, cfg.gh.sigma, cfg.gh.eig_floor);
      write_gh_bundle(layout.models() / "gh", gh, {{"config_hash", cfg.hash()}});
      log << "gh: sigma = " << gh.sigma << ", retained " << gh.retained() << " harmonics\n";
    });
  }

  if (method == TrainMethod::koopman || method == TrainMethod::both) {
    stage("koopman", [&] {
      Eigen::MatrixXd obs = a.coords;
      if (cfg.koopman.stimulus_observables && a.stimulus.n_conditions() > 0) {
        obs.conservativeResize(Eigen::NoChange, d + a.stimulus.n_conditions());
        obs.rightCols(a.stimulus.n_conditions()) = a.stimulus.values.topRows(n);
      }
      const KoopmanModel m = koopman_build(obs, a.train.values, cfg.koopman.svd_tol);
      json doc = koopman_to_json(m);
      doc["reduced_dim"] = d;
      io::write_json(layout.models() / "koopman.json", doc);
      Eigen::MatrixXd spec(m.dim(), 4);
      for (Eigen::Index j = 0; j < m.dim(); ++j) {
        spec.row(j) << static_cast<double>(j), m.eig.values(j).real(), m.eig.values(j).imag(),
            std::abs(m.eig.values(j));
      }
      io::write_csv(layout.reports() / "koopman_spectrum.csv", {"index", "re", "im", "modulus"}, spec);
      log << "koopman: " << m.dim() << "x" << m.dim() << " operator, spectral radius "
          << spec.col(3).maxCoeff() << ", training residual " << m.training_residual << '\n';
    });
  }

  std::vector<Eigen::Index> selected = a.parsimony.selected;
  write_meta(layout.models(), cfg, {{"d", d}, {"selected", selected}});
  write_meta(layout.reports(), cfg);
}

void write_forecast(const fs::path& path, const Eigen::MatrixXd& values, const std::vector<std::string>& names) {
  io::write_csv(path, names, values);
}

void run_forecast(const RunConfig& cfg, std::ostream& log) {
  const Layout layout{cfg.output_dir};
  const EmbeddingArtifacts a = stage("forecast", [&] { return load_embedding(layout); });
  const Eigen::Index n = a.train.n_times();
  const Eigen::Index h = a.test.n_times();
  const Eigen::Index d = a.coords.cols();
  if (h == 0) throw ValidationError("[forecast] empty test set");
  std::vector<std::string> coord_names;
  for (auto s : a.parsimony.selected) coord_names.push_back("psi_" + std::to_string(s));
  const auto& channels = a.train.channel_names;
  const Eigen::VectorXd init = a.coords.row(n - 1).transpose();
  fs::create_directories(layout.forecasts());

  std::optional<GhLiftModel> gh;
  if (fs::exists(layout.models() / "gh" / "meta.json")) {
    gh = stage("forecast", [&] { return read_gh_bundle(layout.models() / "gh"); });
  }

  bool any_rom = false;
  if (fs::exists(layout.models() / "fnn_1.json")) {
    stage("fnn", [&] {
      std::vector<FnnModel> models;
      for (Eigen::Index l = 1; l <= d; ++l) {
        const fs::path p = require(layout.models() / ("fnn_" + std::to_string(l) + ".json"), "network model");
        try {
          models.push_back(fnn_model_from_json(io::read_json(p)));
        } catch (const ValidationError& e) {
          throw ValidationError("'" + p.string() + "': " + e.what());
        }
      }
      if (!gh) throw ValidationError("missing lift model '" + (layout.models() / "gh").string() + "'");
      const Eigen::Index p = models.front().inputs() - d;
      Eigen::MatrixXd stim_seq(h, p);
      if (p > 0) {
        if (p != a.stimulus.n_conditions()) throw ValidationError("network stimulus width does not match stimulus.csv");
        stim_seq = a.stimulus.values.middleRows(n - 1, h);
      }
      const Eigen::MatrixXd reduced = fnn_forecast(models, init, stim_seq, h);
      const Eigen::MatrixXd ambient = gh_lift(*gh, reduced);
      write_forecast(layout.forecasts() / "fnn_gh_reduced.csv", reduced, coord_names);
      write_forecast(layout.forecasts() / "fnn_gh_ambient.csv", ambient, channels);
      log << "forecast: fnn_gh " << reduced.rows() << "x" << reduced.cols() << " reduced, "
          << ambient.rows() << "x" << ambient.cols() << " ambient\n";
    });
    any_rom = true;
  }

  if (fs::exists(layout.models() / "koopman.json")) {
    stage("koopman", [&] {
      const fs::path path = layout.models() / "koopman.json";
      KoopmanModel m;
      try {
        m = koopman_from_json(io::read_json(path));
      } catch (const ValidationError& e) {
        throw ValidationError("'" + path.string() + "': " + e.what());
      }
      Eigen::VectorXd start = init;
      if (m.dim() > d) {
        const Eigen::Index extra = m.dim() - d;
        if (extra != a.stimulus.n_conditions()) throw ValidationError("Koopman observables do not match stimulus.csv");
        start.conservativeResize(m.dim());
        start.tail(extra) = a.stimulus.values.row(n - 1).transpose();
      }
      const KoopmanForecast f = koopman_forecast(m, start, h);
      if (f.max_imaginary > 1e-8) {
        warn("Koopman forecast imaginary residue " + std::to_string(f.max_imaginary) + " exceeds 1e-8");
      }
      Eigen::MatrixXd reduced = f.reduced.leftCols(d);
      if (cfg.koopman.reduced_modes == "restrict") {
        reduced = nystrom_restrict(a.embedding, a.train.values, f.ambient, a.parsimony.selected);
      }
      write_forecast(layout.forecasts() / "koopman_reduced.csv", reduced, coord_names);
      write_forecast(layout.forecasts() / "koopman_ambient.csv", f.ambient, channels);
      log << "forecast: koopman " << reduced.rows() << "x" << reduced.cols() << " reduced, "
          << f.ambient.rows() << "x" << f.ambient.cols() << " ambient\n";
    });
    any_rom = true;
  }
  if (!any_rom) throw ValidationError("[forecast] no trained models in '" + layout.models().string() + "'");

  stage("nrw", [&] {
    const fs::path amb_path = layout.forecasts() / "nrw_ambient.csv";
    const fs::path red_path = layout.forecasts() / "nrw_reduced.csv";
    if (cfg.nrw_mode == NrwMode::reduced_then_lift) {
      if (!gh) throw ValidationError("missing lift model '" + (layout.models() / "gh").string() + "'");
      const Eigen::MatrixXd test_reduced =
          nystrom_restrict(a.embedding, a.train.values, a.test.values, a.parsimony.selected);
      write_forecast(layout.forecasts() / "test_reduced.csv", test_reduced, coord_names);
      const ForecastResult r = nrw_forecast(init, test_reduced, NrwMode::reduced_then_lift, &*gh);
      write_forecast(red_path, r.reduced, coord_names);
      write_forecast(amb_path, r.ambient, channels);
    } else {
      const ForecastResult r =
          nrw_forecast(a.train.values.row(n - 1).transpose(), a.test.values, NrwMode::ambient);
      write_forecast(amb_path, r.ambient, channels);
      std::error_code ec;
      fs::remove(red_path, ec);
      fs::remove(layout.forecasts() / "test_reduced.csv", ec);
    }
    log << "forecast: nrw (" << to_string(cfg.nrw_mode) << ")\n";
  });
  write_meta(layout.forecasts(), cfg, {{"horizon", h}, {"first_time", n}});
}

void run_evaluate(const RunConfig& cfg, std::ostream& log) {
  stage("evaluate", [&] {
    const Layout layout{cfg.output_dir};
    auto test = io::read_csv(require(layout.embedding() / "series_test.csv", "test series"));
    const Eigen::Index first_time =
        io::read_json(require(layout.forecasts() / "meta.json", "forecast metadata")).value("first_time", Eigen::Index{0});
    std::vector<ForecastResult> results;
    for (Method m : {Method::fnn_gh, Method::koopman, Method::nrw}) {
      const fs::path p = layout.forecasts() / (to_string(m) + "_ambient.csv");
      if (!fs::exists(p)) continue;
      ForecastResult r;
      r.method = m;
      r.ambient = io::read_csv(p).values;
      const fs::path rp = layout.forecasts() / (to_string(m) + "_reduced.csv");
      if (fs::exists(rp)) r.reduced = io::read_csv(rp).values;
      if (r.ambient.rows() != test.values.rows()) {
        throw ValidationError("horizon mismatch: '" + p.string() + "' has " + std::to_string(r.ambient.rows()) +
                              " rows, test set has " + std::to_string(test.values.rows()));
      }
      results.push_back(std::move(r));
    }
    if (results.empty()) throw ValidationError("no forecasts in '" + layout.forecasts().string() + "'");
    const ErrorTable table = comparison_table(results, test.values, test.header);
    fs::create_directories(layout.reports());
    write_comparison_csv(layout.reports() / "comparison.csv", table);
    write_plot_data_csv(layout.reports() / "plot_data.csv", first_time, results, test.values, test.header);
    write_meta(layout.reports(), cfg);
    for (std::size_t k = 0; k < table.methods.size(); ++k) {
      const auto col = static_cast<Eigen::Index>(k);
      Eigen::Index best = 0;
      for (Eigen::Index m = 0; m < table.best.rows(); ++m) best += table.best(m, col);
      log << "evaluate: " << to_string(table.methods[k]) << " mean rmse " << table.rmse.col(col).mean()
          << ", best on " << best << " of " << table.rmse.rows() << " channels\n";
    }
  });
}

}  // namespace

void cmd_synth(const RunConfig& cfg, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  run_synth(cfg, log);
}

void cmd_glm(const RunConfig& cfg, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  run_glm(cfg, log);
}

void cmd_embed(const RunConfig& cfg, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  run_embed(cfg, log);
}

void cmd_train(const RunConfig& cfg, TrainMethod method, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  run_train(cfg, method, log);
}

void cmd_forecast(const RunConfig& cfg, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  run_forecast(cfg, log);
}

void cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  run_evaluate(cfg, log);
}

void cmd_forecast_evaluate(const RunConfig& cfg, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  run_forecast(cfg, log);
  run_evaluate(cfg, log);
}

void cmd_run_all(const RunConfig& cfg, std::ostream& log) {
  RunLock lock(cfg.output_dir);
  if (cfg.synth) run_synth(cfg, log);
  if (cfg.glm.epochs) run_glm(cfg, log);
  run_embed(cfg, log);
  run_train(cfg, TrainMethod::both, log);
  run_forecast(cfg, log);
  run_evaluate(cfg, log);
}

}  // namespace dmrom::pipeline
