// Copyright 2026 The dmrom Authors.
// SPDX-License-Identifier: Apache-2.0

#include "dmrom/dmrom.h"

#include <cstring>
#include <sstream>
#include <string>

#include "dmrom/dmaps.hpp"
#include "dmrom/error.hpp"
#include "dmrom/lifting.hpp"
#include "dmrom/log.hpp"
#include "dmrom/parsimony.hpp"
#include "dmrom/pipeline.hpp"
#include "dmrom/rom_koopman.hpp"

struct dmrom_config {
  dmrom::pipeline::RunConfig cfg;
};
struct dmrom_embedding {
  dmrom::DiffusionEmbedding e;
};
struct dmrom_koopman {
  dmrom::KoopmanModel m;
};
struct dmrom_gh {
  dmrom::GhLiftModel g;
};

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

thread_local std::string last_error;

template <class Fn>
dmrom_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return DMROM_OK;
  } catch (const dmrom::ValidationError& e) {
    last_error = e.what();
    return DMROM_ERR_VALIDATION;
  } catch (const std::exception& e) {
    last_error = e.what();
    return DMROM_ERR_RUNTIME;
  } catch (...) {
    last_error = "unknown error";
    return DMROM_ERR_RUNTIME;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw dmrom::ValidationError(std::string(what) + " is NULL");
}

Eigen::MatrixXd in(const double* p, size_t rows, size_t cols, const char* what) {
  if (rows * cols > 0) need(p, what);
  if (rows * cols == 0) return Eigen::MatrixXd(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return Eigen::Map<const RowMajor>(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

void out(const Eigen::MatrixXd& m, double* p) {
  Eigen::Map<RowMajor>(p, m.rows(), m.cols()) = m;
}

// Streams complete lines to a C callback.
class LineBuf : public std::stringbuf {
 public:
  LineBuf(dmrom_message_fn fn, void* user) : fn_(fn), user_(user) {}
  ~LineBuf() override { flush_lines(true); }

 protected:
  int sync() override {
    flush_lines(false);
    return 0;
  }
  int_type overflow(int_type ch) override {
    const int_type r = std::stringbuf::overflow(ch);
    if (ch == '\n') flush_lines(false);
    return r;
  }

 private:
  void flush_lines(bool all) {
    std::string s = str();
    std::size_t start = 0;
    for (std::size_t nl; (nl = s.find('\n', start)) != std::string::npos; start = nl + 1) {
      if (fn_ != nullptr) fn_(s.substr(start, nl - start).c_str(), user_);
    }
    std::string rest = s.substr(start);
    if (all && !rest.empty()) {
      if (fn_ != nullptr) fn_(rest.c_str(), user_);
      rest.clear();
    }
    str(rest);
    seekpos(static_cast<std::streamoff>(rest.size()), std::ios_base::out);
  }
  dmrom_message_fn fn_;
  void* user_;
};

}  // namespace

extern "C" {

const char* dmrom_version(void) { return "0.1.0"; }

const char* dmrom_last_error(void) { return last_error.c_str(); }

void dmrom_set_warning_handler(dmrom_message_fn fn, void* user) {
  if (fn == nullptr) {
    dmrom::set_warning_sink(nullptr);
  } else {
    dmrom::set_warning_sink([fn, user](const std::string& msg) { fn(msg.c_str(), user); });
  }
}

dmrom_status dmrom_config_load(const char* path, dmrom_config** result) {
  return guarded([&] {
    need(path, "path");
    need(result, "out");
    *result = new dmrom_config{dmrom::pipeline::load_config(path)};
  });
}

dmrom_status dmrom_config_parse(const char* json_text, const char* base_dir, dmrom_config** result) {
  return guarded([&] {
    need(json_text, "json_text");
    need(result, "out");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw dmrom::ValidationError(std::string("run config: ") + e.what());
    }
    *result = new dmrom_config{
        dmrom::pipeline::config_from_json(j, base_dir ? std::filesystem::path(base_dir) : std::filesystem::path{})};
  });
}

dmrom_status dmrom_config_set_seed(dmrom_config* cfg, uint64_t seed) {
  return guarded([&] {
    need(cfg, "config");
    cfg->cfg.set_seed(seed);
  });
}

dmrom_status dmrom_config_set_output_dir(dmrom_config* cfg, const char* dir) {
  return guarded([&] {
    need(cfg, "config");
    need(dir, "dir");
    if (*dir == '\0') throw dmrom::ValidationError("output directory is empty");
    cfg->cfg.output_dir = dir;
  });
}

dmrom_status dmrom_config_hash(const dmrom_config* cfg, char result[17]) {
  return guarded([&] {
    need(cfg, "config");
    need(result, "out");
    const std::string h = cfg->cfg.hash();
    std::memcpy(result, h.c_str(), 17);
  });
}

void dmrom_config_free(dmrom_config* cfg) { delete cfg; }

dmrom_status dmrom_run_command(const dmrom_config* cfg, dmrom_command cmd, dmrom_message_fn log, void* user) {
  return guarded([&] {
    need(cfg, "config");
    namespace p = dmrom::pipeline;
    LineBuf buf(log, user);
    std::ostream os(&buf);
    const auto& c = cfg->cfg;
    switch (cmd) {
      case DMROM_CMD_SYNTH: p::cmd_synth(c, os); break;
      case DMROM_CMD_GLM: p::cmd_glm(c, os); break;
      case DMROM_CMD_EMBED: p::cmd_embed(c, os); break;
      case DMROM_CMD_TRAIN_FNN: p::cmd_train(c, p::TrainMethod::fnn, os); break;
      case DMROM_CMD_TRAIN_KOOPMAN: p::cmd_train(c, p::TrainMethod::koopman, os); break;
      case DMROM_CMD_TRAIN_ALL: p::cmd_train(c, p::TrainMethod::both, os); break;
      case DMROM_CMD_FORECAST: p::cmd_forecast(c, os); break;
      case DMROM_CMD_EVALUATE: p::cmd_evaluate(c, os); break;
      case DMROM_CMD_RUN_ALL: p::cmd_run_all(c, os); break;
      default: throw dmrom::ValidationError("unknown command " + std::to_string(static_cast<int>(cmd)));
    }
    os.flush();
  });
}

dmrom_status dmrom_embedding_compute(const double* x, size_t n, size_t m, double sigma, double alpha, size_t k,
                                     dmrom_embedding** result) {
  return guarded([&] {
    need(result, "out");
    const Eigen::MatrixXd pts = in(x, n, m, "x");
    const auto w = dmrom::gaussian_affinity(pts, sigma > 0.0 ? std::optional<double>(sigma) : std::nullopt);
    const auto p = dmrom::diffusion_operator(w, alpha);
    *result = new dmrom_embedding{dmrom::spectral_decompose(p, static_cast<Eigen::Index>(k))};
  });
}

dmrom_status dmrom_embedding_shape(const dmrom_embedding* e, size_t* n, size_t* k) {
  return guarded([&] {
    need(e, "embedding");
    if (n) *n = static_cast<size_t>(e->e.eigenvectors.rows());
    if (k) *k = static_cast<size_t>(e->e.k());
  });
}

dmrom_status dmrom_embedding_sigma(const dmrom_embedding* e, double* sigma) {
  return guarded([&] {
    need(e, "embedding");
    need(sigma, "sigma");
    *sigma = e->e.sigma;
  });
}

dmrom_status dmrom_embedding_eigenvalues(const dmrom_embedding* e, double* result) {
  return guarded([&] {
    need(e, "embedding");
    need(result, "out");
    out(e->e.eigenvalues.transpose(), result);
  });
}

dmrom_status dmrom_embedding_eigenvectors(const dmrom_embedding* e, double* result) {
  return guarded([&] {
    need(e, "embedding");
    need(result, "out");
    out(e->e.eigenvectors, result);
  });
}

dmrom_status dmrom_nystrom(const dmrom_embedding* e, const double* x_train, size_t m, const double* x_new,
                           size_t n_new, const size_t* indices, size_t d, double* result) {
  return guarded([&] {
    need(e, "embedding");
    need(indices, "indices");
    need(result, "out");
    const auto n = static_cast<size_t>(e->e.eigenvectors.rows());
    std::vector<Eigen::Index> idx(indices, indices + d);
    out(dmrom::nystrom_restrict(e->e, in(x_train, n, m, "x_train"), in(x_new, n_new, m, "x_new"), idx), result);
  });
}

void dmrom_embedding_free(dmrom_embedding* e) { delete e; }

dmrom_status dmrom_parsimony_errors(const double* psi, size_t n, size_t k, double scale_fraction, double* er) {
  return guarded([&] {
    need(er, "er");
    out(dmrom::parsimony_errors(in(psi, n, k, "psi"), scale_fraction).transpose(), er);
  });
}

dmrom_status dmrom_koopman_fit(const double* coords, size_t n, size_t d, const double* x_train, size_t m,
                               double svd_tol, dmrom_koopman** result) {
  return guarded([&] {
    need(result, "out");
    *result = new dmrom_koopman{dmrom::koopman_build(in(coords, n, d, "coords"), in(x_train, n, m, "x_train"), svd_tol)};
  });
}

dmrom_status dmrom_koopman_shape(const dmrom_koopman* k, size_t* d, size_t* m) {
  return guarded([&] {
    need(k, "model");
    if (d) *d = static_cast<size_t>(k->m.dim());
    if (m) *m = static_cast<size_t>(k->m.ambient_dim());
  });
}

dmrom_status dmrom_koopman_operator(const dmrom_koopman* k, double* result) {
  return guarded([&] {
    need(k, "model");
    need(result, "out");
    out(k->m.operator_matrix, result);
  });
}

dmrom_status dmrom_koopman_eigenvalues(const dmrom_koopman* k, double* re, double* im) {
  return guarded([&] {
    need(k, "model");
    for (Eigen::Index j = 0; j < k->m.dim(); ++j) {
      if (re) re[j] = k->m.eig.values(j).real();
      if (im) im[j] = k->m.eig.values(j).imag();
    }
  });
}

dmrom_status dmrom_koopman_forecast(const dmrom_koopman* k, const double* init, size_t h, double* reduced,
                                    double* ambient) {
  return guarded([&] {
    need(k, "model");
    const Eigen::VectorXd x0 = in(init, static_cast<size_t>(k->m.dim()), 1, "init");
    const auto f = dmrom::koopman_forecast(k->m, x0, static_cast<Eigen::Index>(h));
    if (reduced) out(f.reduced, reduced);
    if (ambient) out(f.ambient, ambient);
  });
}

void dmrom_koopman_free(dmrom_koopman* k) { delete k; }

dmrom_status dmrom_gh_fit(const double* y, size_t n, size_t d, const double* x, size_t m, double sigma,
                          double eig_floor, dmrom_gh** result) {
  return guarded([&] {
    need(result, "out");
    *result = new dmrom_gh{dmrom::gh_fit(in(y, n, d, "y"), in(x, n, m, "x"),
                                         sigma > 0.0 ? std::optional<double>(sigma) : std::nullopt, eig_floor)};
  });
}

dmrom_status dmrom_gh_lift(const dmrom_gh* g, const double* y_new, size_t n_new, double* result) {
  return guarded([&] {
    need(g, "model");
    need(result, "out");
    out(dmrom::gh_lift(g->g, in(y_new, n_new, static_cast<size_t>(g->g.y_train.cols()), "y_new")), result);
  });
}

void dmrom_gh_free(dmrom_gh* g) { delete g; }

}  // extern "C"
