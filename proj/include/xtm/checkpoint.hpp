#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "xtm/backbone_vae.hpp"
#include "xtm/error.hpp"

namespace xtm {

using ojson = nlohmann::ordered_json;

inline ojson config_to_json(const TrainConfig& c) {
  ojson j;
  j["topics"] = c.topics;
  j["hidden_dim"] = c.hidden_dim;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["seed"] = c.seed;
  j["top_n"] = c.top_n;
  j["top_m"] = c.top_m;
  j["lambda_mmd"] = c.lambda_mmd;
  j["lambda_qa"] = c.lambda_qa;
  j["tau"] = c.tau;
  j["rounds"] = c.rounds;
  j["refine_every"] = c.refine_every;
  j["kernel"] = c.kernel;
  return j;
}

template <class J>
TrainConfig config_from_json(const J& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).template get<std::decay_t<decltype(field)>>();
  };
  get("topics", c.topics);
  get("hidden_dim", c.hidden_dim);
  get("epochs", c.epochs);
  get("batch_size", c.batch_size);
  get("learning_rate", c.learning_rate);
  get("seed", c.seed);
  get("top_n", c.top_n);
  get("top_m", c.top_m);
  get("lambda_mmd", c.lambda_mmd);
  get("lambda_qa", c.lambda_qa);
  get("tau", c.tau);
  get("rounds", c.rounds);
  get("refine_every", c.refine_every);
  get("kernel", c.kernel);
  return c;
}

namespace detail {

inline ojson mat_json(const Mat& m) {
  ojson rows = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    ojson row = ojson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline ojson vec_json(const Vec& v) {
  ojson a = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <class J>
Mat json_mat(const J& j, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw Error(Errc::BadCheckpoint, std::string(what) + ": row count");
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(Errc::BadCheckpoint, std::string(what) + ": column count");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].template get<double>();
  }
  if (!m.allFinite()) throw Error(Errc::BadCheckpoint, std::string(what) + ": non-finite value");
  return m;
}

template <class J>
Vec json_vec(const J& j, Eigen::Index n, const char* what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
    throw Error(Errc::BadCheckpoint, std::string(what) + ": length");
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = j[static_cast<std::size_t>(i)].template get<double>();
  if (!v.allFinite()) throw Error(Errc::BadCheckpoint, std::string(what) + ": non-finite value");
  return v;
}

}  // namespace detail

/// Layout: encoder<l> = [weight (H x |V_l|), bias (H)];
/// shared = [hidden_w, hidden_b, mu_w, mu_b, logvar_w, logvar_b]; all row-major.
inline ojson checkpoint_to_json(const ModelState& s) {
  ojson j;
  j["config"] = config_to_json(s.config);
  for (int l = 0; l < 2; ++l) {
    const auto& in = s.params.input[l];
    j[l == 0 ? "encoder1" : "encoder2"] = ojson::array({detail::mat_json(in.weight), detail::vec_json(in.bias)});
  }
  const auto& sh = s.params.shared;
  j["shared"] = ojson::array({detail::mat_json(sh.hidden_w), detail::vec_json(sh.hidden_b),
                              detail::mat_json(sh.mu_w), detail::vec_json(sh.mu_b),
                              detail::mat_json(sh.logvar_w), detail::vec_json(sh.logvar_b)});
  j["beta1_logits"] = detail::mat_json(s.params.beta_logits[0]);
  j["beta2_logits"] = detail::mat_json(s.params.beta_logits[1]);
  j["seed"] = s.seed;
  return j;
}

inline ModelState checkpoint_from_json(const nlohmann::json& j) {
  try {
    ModelState s;
    s.config = config_from_json(j.at("config"));
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& b1 = j.at("beta1_logits");
    const auto& b2 = j.at("beta2_logits");
    if (!b1.is_array() || b1.empty() || !b2.is_array() || b2.empty() || !b1[0].is_array())
      throw Error(Errc::BadCheckpoint, "beta logits");
    const auto K = static_cast<Eigen::Index>(b1[0].size());
    const auto V1 = static_cast<Eigen::Index>(b1.size());
    const auto V2 = static_cast<Eigen::Index>(b2.size());
    s.params.beta_logits[0] = detail::json_mat(b1, V1, K, "beta1_logits");
    s.params.beta_logits[1] = detail::json_mat(b2, V2, K, "beta2_logits");

    const auto& sh = j.at("shared");
    if (!sh.is_array() || sh.size() != 6 || !sh[0].is_array()) throw Error(Errc::BadCheckpoint, "shared");
    const auto H = static_cast<Eigen::Index>(sh[0].size());
    s.params.shared = {detail::json_mat(sh[0], H, H, "hidden_w"), detail::json_vec(sh[1], H, "hidden_b"),
                       detail::json_mat(sh[2], K, H, "mu_w"),     detail::json_vec(sh[3], K, "mu_b"),
                       detail::json_mat(sh[4], K, H, "logvar_w"), detail::json_vec(sh[5], K, "logvar_b")};
    const Eigen::Index V[2] = {V1, V2};
    for (int l = 0; l < 2; ++l) {
      const auto& e = j.at(l == 0 ? "encoder1" : "encoder2");
      if (!e.is_array() || e.size() != 2) throw Error(Errc::BadCheckpoint, "encoder layout");
      s.params.input[l].weight = detail::json_mat(e[0], H, V[l], "encoder weight");
      s.params.input[l].bias = detail::json_vec(e[1], H, "encoder bias");
    }
    if (s.config.topics != K) throw Error(Errc::BadCheckpoint, "config.topics disagrees with beta shape");
    if (s.config.hidden_dim != H) throw Error(Errc::BadCheckpoint, "config.hidden_dim disagrees with shared shape");
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::BadCheckpoint, e.what());
  }
}

inline void save_checkpoint(const std::string& path, const ModelState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  out << checkpoint_to_json(s).dump() << '\n';
  if (!out) throw Error(Errc::IoError, "write failed " + path);
}

inline ModelState load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::BadCheckpoint, e.what());
  }
  return checkpoint_from_json(j);
}

}  // namespace xtm
