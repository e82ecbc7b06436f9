#include "uamp/checkpoint.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace uamp {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto r = j.size();
  if (r == 0) return Matrix();
  const auto c = j.at(0).size();
  Matrix m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t k = 0; k < c; ++k)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          j.at(i).at(k).get<double>();
  return m;
}

const char* setting_name(LdSetting s) {
  switch (s) {
    case LdSetting::Cs: return "cs";
    case LdSetting::R1: return "r1";
    case LdSetting::R1Multi: return "r1_multi";
  }
  return "cs";
}

LdSetting setting_from_name(const std::string& s) {
  if (s == "cs") return LdSetting::Cs;
  if (s == "r1") return LdSetting::R1;
  if (s == "r1_multi") return LdSetting::R1Multi;
  throw std::invalid_argument("checkpoint: unknown setting '" + s + "'");
}

}  // namespace

void save_checkpoint(const std::string& path, const LdNet& net,
                     const std::string& config_json) {
  json j;
  j["version"] = 1;
  j["setting"] = setting_name(net.setting);
  j["signal_dim"] = net.signal_dim;
  j["tau_path"] = net.tau_path;
  j["mu_path"] = net.mu_path;
  j["has_b"] = net.has_b;
  if (net.has_b) j["B"] = matrix_to_json(net.B);
  json dens = json::array();
  for (const Mlp& mlp : net.denoisers) {
    json d;
    d["widths"] = mlp.widths();
    d["activation"] = mlp.activation() == Activation::Gelu ? "gelu" : "relu";
    json Ws = json::array(), bs = json::array();
    for (const Matrix& W : mlp.W) Ws.push_back(matrix_to_json(W));
    for (const Vector& b : mlp.b) {
      json v = json::array();
      for (Eigen::Index i = 0; i < b.size(); ++i) v.push_back(b[i]);
      bs.push_back(std::move(v));
    }
    d["W"] = std::move(Ws);
    d["b"] = std::move(bs);
    dens.push_back(std::move(d));
  }
  j["denoisers"] = std::move(dens);
  if (!config_json.empty()) j["config"] = json::parse(config_json);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(1) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  json j = json::parse(in);
  Checkpoint ck;
  ck.net.setting = setting_from_name(j.at("setting").get<std::string>());
  ck.net.signal_dim = j.value("signal_dim", 1);
  ck.net.tau_path = j.value("tau_path", std::vector<double>{});
  ck.net.mu_path = j.value("mu_path", std::vector<double>{});
  ck.net.has_b = j.value("has_b", false);
  if (ck.net.has_b) ck.net.B = matrix_from_json(j.at("B"));
  for (const json& d : j.at("denoisers")) {
    Mlp mlp(d.at("widths").get<std::vector<int>>(),
            d.at("activation").get<std::string>() == "relu" ? Activation::Relu
                                                            : Activation::Gelu);
    const json& Ws = d.at("W");
    const json& bs = d.at("b");
    for (std::size_t l = 0; l < mlp.W.size(); ++l) {
      mlp.W[l] = matrix_from_json(Ws.at(l));
      const json& bv = bs.at(l);
      mlp.b[l].resize(static_cast<Eigen::Index>(bv.size()));
      for (std::size_t i = 0; i < bv.size(); ++i)
        mlp.b[l][static_cast<Eigen::Index>(i)] = bv.at(i).get<double>();
    }
    ck.net.denoisers.push_back(std::move(mlp));
  }
  if (j.contains("config")) ck.config_json = j.at("config").dump();
  return ck;
}

}  // namespace uamp
