#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "lfmc/common.hpp"
#include "lfmc/env/observation.hpp"
#include "lfmc/rl/mlp.hpp"
#include "lfmc/rl/normalizer.hpp"

namespace lfmc::rl {

inline constexpr int kActionDim = 4;
inline constexpr const char* kCheckpointMagic = "LFMC-POLICY v1";

/// Identifies what a policy was trained for.
struct PolicyMeta {
  double control_frequency = 10.0;
  env::ObservationMode mode = env::ObservationMode::Blind;
  int history = 0;
  bool domain_randomization = false;

  std::string label() const {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%gHz-%s-H%d-%s", control_frequency, env::to_string(mode).c_str(), history,
                  domain_randomization ? "dr" : "nodr");
    return buf;
  }
  bool operator==(const PolicyMeta&) const = default;
};

/// Diagonal Gaussian log density.
inline double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std, const VectorXd& a) {
  const VectorXd z = (a - mean).cwiseQuotient(log_std.array().exp().matrix());
  return -0.5 * z.squaredNorm() - log_std.sum() - 0.5 * static_cast<double>(a.size()) * std::log(2.0 * kPi);
}

inline double gaussian_entropy(const VectorXd& log_std) {
  return log_std.sum() + 0.5 * static_cast<double>(log_std.size()) * (1.0 + std::log(2.0 * kPi));
}

/// Gaussian actor with state-independent log-std, a value network of the same
/// shape, and the observation normalizer both networks read through.
class Policy {
 public:
  Policy() = default;
  Policy(int obs_dim, const std::vector<int>& hidden, PolicyMeta meta = {})
      : actor(dims(obs_dim, hidden, kActionDim)),
        critic(dims(obs_dim, hidden, 1)),
        log_std(VectorXd::Zero(kActionDim)),
        norm(obs_dim),
        meta(meta) {}

  void init(Rng& rng, double initial_log_std) {
    actor.init(rng, 0.01);
    critic.init(rng, 1.0);
    log_std.setConstant(initial_log_std);
  }

  int obs_dim() const { return actor.in_dim(); }

  /// Action means for raw observations (one per column).
  MatrixXd mean(const MatrixXd& raw) const { return actor.forward(norm.normalize(raw)); }
  VectorXd act(const VectorXd& raw) const { return mean(MatrixXd(raw)).col(0); }
  MatrixXd value(const MatrixXd& raw) const { return critic.forward(norm.normalize(raw)); }

  /// d mean / d raw observation (action dim x observation dim).
  MatrixXd observation_jacobian(const VectorXd& raw) const {
    if (raw.size() != obs_dim()) throw ContractViolation("policy: observation dimension mismatch");
    const VectorXd scale = norm.inv_std();
    return actor.input_jacobian(norm.normalize(MatrixXd(raw)).col(0)) * scale.asDiagonal();
  }

  bool operator==(const Policy& o) const {
    return meta == o.meta && actor == o.actor && critic == o.critic && log_std.size() == o.log_std.size() &&
           log_std == o.log_std && norm == o.norm;
  }

  Mlp actor;
  Mlp critic;
  VectorXd log_std;
  RunningNormalizer norm;
  PolicyMeta meta;

 private:
  static std::vector<int> dims(int in, const std::vector<int>& hidden, int out) {
    std::vector<int> d{in};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(out);
    return d;
  }
};

namespace detail {

inline void put(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

inline void put_vec(std::ostream& os, const char* key, const VectorXd& v) {
  os << key << ' ' << v.size();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    os << ' ';
    put(os, v[i]);
  }
  os << '\n';
}

inline void put_net(std::ostream& os, const char* name, const Mlp& net) {
  for (std::size_t l = 0; l < net.layers(); ++l) {
    const MatrixXd& w = net.weight(l);
    os << name << ".W" << l << ' ' << w.rows() << ' ' << w.cols() << '\n';
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (c) os << ' ';
        put(os, w(r, c));
      }
      os << '\n';
    }
    put_vec(os, (std::string(name) + ".b" + std::to_string(l)).c_str(), net.bias(l));
  }
}

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw ConfigError("checkpoint: unexpected end of file");
    return w;
  }
  void expect(const std::string& w) {
    const std::string got = word();
    if (got != w) throw ConfigError("checkpoint: expected '" + w + "', found '" + got + "'");
  }
  double number() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') throw ConfigError("checkpoint: bad number '" + w + "'");
    return v;
  }
  long integer() {
    const double v = number();
    if (v != std::floor(v)) throw ConfigError("checkpoint: expected an integer");
    return static_cast<long>(v);
  }
  VectorXd vec(const std::string& key, Eigen::Index n) {
    expect(key);
    if (integer() != n) throw ConfigError("checkpoint: " + key + " has the wrong length");
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = number();
    return v;
  }
  std::vector<int> dims(const std::string& key) {
    expect(key);
    const long n = integer();
    if (n < 2 || n > 64) throw ConfigError("checkpoint: bad layer count for " + key);
    std::vector<int> d;
    for (long i = 0; i < n; ++i) d.push_back(static_cast<int>(integer()));
    return d;
  }
  void net(const std::string& name, Mlp& net) {
    for (std::size_t l = 0; l < net.layers(); ++l) {
      MatrixXd& w = net.weight(l);
      expect(name + ".W" + std::to_string(l));
      if (integer() != w.rows() || integer() != w.cols()) throw ConfigError("checkpoint: " + name + " weight shape mismatch");
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = number();
      }
      net.bias(l) = vec(name + ".b" + std::to_string(l), w.rows());
    }
  }

 private:
  std::istream& is_;
};

}  // namespace detail

/// Text checkpoint; 17 significant digits round-trip every double exactly.
inline void write_checkpoint(std::ostream& os, const Policy& p) {
  os << kCheckpointMagic << '\n';
  os << "activation tanh\n";
  auto dims_line = [&](const char* key, const std::vector<int>& d) {
    os << key << ' ' << d.size();
    for (int x : d) os << ' ' << x;
    os << '\n';
  };
  dims_line("actor_dims", p.actor.dims());
  dims_line("critic_dims", p.critic.dims());
  os << "control_frequency ";
  detail::put(os, p.meta.control_frequency);
  os << "\nobservation " << env::to_string(p.meta.mode) << "\nhistory " << p.meta.history
     << "\ndomain_randomization " << (p.meta.domain_randomization ? 1 : 0) << "\nobs_count ";
  detail::put(os, p.norm.count());
  os << '\n';
  detail::put_vec(os, "obs_mean", p.norm.mean());
  detail::put_vec(os, "obs_var", p.norm.var());
  detail::put_vec(os, "log_std", p.log_std);
  detail::put_net(os, "actor", p.actor);
  detail::put_net(os, "critic", p.critic);
  os << "end\n";
}

inline Policy read_checkpoint(std::istream& is) {
  std::string magic;
  std::getline(is, magic);
  if (magic != kCheckpointMagic) throw ConfigError("checkpoint: missing '" + std::string(kCheckpointMagic) + "' header");
  detail::Reader r(is);
  r.expect("activation");
  const std::string act = r.word();
  if (act != "tanh") throw ConfigError("checkpoint: unsupported activation '" + act + "'");
  Policy p;
  p.actor = Mlp(r.dims("actor_dims"));
  p.critic = Mlp(r.dims("critic_dims"));
  if (p.actor.out_dim() != kActionDim || p.critic.out_dim() != 1 || p.actor.in_dim() != p.critic.in_dim()) {
    throw ConfigError("checkpoint: inconsistent network shapes");
  }
  r.expect("control_frequency");
  p.meta.control_frequency = r.number();
  r.expect("observation");
  p.meta.mode = env::observation_mode_from_string(r.word());
  r.expect("history");
  p.meta.history = static_cast<int>(r.integer());
  r.expect("domain_randomization");
  p.meta.domain_randomization = r.integer() != 0;
  r.expect("obs_count");
  const double count = r.number();
  const int n = p.actor.in_dim();
  const VectorXd mean = r.vec("obs_mean", n);
  const VectorXd var = r.vec("obs_var", n);
  p.norm.set(mean, var, count);
  p.log_std = r.vec("log_std", kActionDim);
  r.net("actor", p.actor);
  r.net("critic", p.critic);
  r.expect("end");
  return p;
}

inline void save_checkpoint(const std::string& path, const Policy& p) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write checkpoint " + path);
  write_checkpoint(os, p);
  if (!os) throw ConfigError("error writing checkpoint " + path);
}

inline Policy load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open checkpoint " + path);
  return read_checkpoint(is);
}

}  // namespace lfmc::rl
