#include "echmm/model_io.hpp"

#include "json.hpp"

#include <fstream>
#include <sstream>

namespace echmm {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j, Eigen::Index cols, const std::string& what) {
  if (!j.is_array()) throw InputError(what + " must be an array of rows");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols)
      throw ShapeError(what + " row " + std::to_string(r) + " has the wrong width");
    for (std::size_t c = 0; c < j[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
  }
  return m;
}

}  // namespace

std::string params_to_json(const ModelParams& p) {
  json doc;
  doc["format"] = "echmm-params";
  doc["version"] = 1;
  doc["states"] = p.states;
  doc["classes"] = p.classes;
  doc["smoothing"] = p.smoothing;
  doc["sigma_floor"] = p.sigma_floor;
  doc["joint_state_order"] = "mixed radix over neighbors, first neighbor most significant";
  doc["price_components"] = {"open", "high", "low", "close"};
  json stocks = json::array();
  for (int s = 0; s < p.num_stocks(); ++s) {
    const auto us = static_cast<std::size_t>(s);
    json st;
    st["id"] = p.stock_ids[us];
    json nb = json::array();
    for (int j : p.neighbors[us]) nb.push_back(p.stock_ids[static_cast<std::size_t>(j)]);
    st["neighbors"] = nb;
    st["initial"] = matrix_to_json(p.initial.row(s))[0];
    st["transition"] = matrix_to_json(p.transition[us]);
    st["gauss_mean"] = matrix_to_json(p.gauss_mean[us]);
    st["gauss_std"] = matrix_to_json(p.gauss_std[us]);
    st["event_table"] = matrix_to_json(p.event_table[us]);
    st["price_center"] = matrix_to_json(p.price_center.row(s))[0];
    st["price_scale"] = matrix_to_json(p.price_scale.row(s))[0];
    stocks.push_back(std::move(st));
  }
  doc["stocks"] = std::move(stocks);
  return doc.dump(1) + "\n";
}

ModelParams params_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("parameter document is not valid JSON: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "echmm-params") throw InputError("not an echmm parameter document");
    ModelParams p;
    p.states = doc.at("states").get<int>();
    p.classes = doc.at("classes").get<int>();
    p.smoothing = doc.at("smoothing").get<double>();
    p.sigma_floor = doc.at("sigma_floor").get<double>();
    const auto& stocks = doc.at("stocks");
    const auto S = static_cast<int>(stocks.size());
    for (const auto& st : stocks) p.stock_ids.push_back(st.at("id").get<std::string>());
    p.initial.resize(S, p.states);
    p.price_center.resize(S, kPriceComponents);
    p.price_scale.resize(S, kPriceComponents);
    for (int s = 0; s < S; ++s) {
      const auto& st = stocks[static_cast<std::size_t>(s)];
      std::vector<int> nb;
      for (const auto& id : st.at("neighbors")) {
        const auto it = std::find(p.stock_ids.begin(), p.stock_ids.end(), id.get<std::string>());
        if (it == p.stock_ids.end()) throw InputError("unknown neighbor " + id.get<std::string>());
        nb.push_back(static_cast<int>(it - p.stock_ids.begin()));
      }
      p.neighbors.push_back(std::move(nb));
      p.initial.row(s) = matrix_from_json(json::array({st.at("initial")}), p.states, "initial");
      p.transition.push_back(matrix_from_json(st.at("transition"), p.states, "transition"));
      p.gauss_mean.push_back(matrix_from_json(st.at("gauss_mean"), kPriceComponents, "gauss_mean"));
      p.gauss_std.push_back(matrix_from_json(st.at("gauss_std"), kPriceComponents, "gauss_std"));
      p.event_table.push_back(matrix_from_json(st.at("event_table"), p.classes, "event_table"));
      p.price_center.row(s) =
          matrix_from_json(json::array({st.at("price_center")}), kPriceComponents, "price_center");
      p.price_scale.row(s) =
          matrix_from_json(json::array({st.at("price_scale")}), kPriceComponents, "price_scale");
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed parameter document: ") + e.what());
  }
}

void save_params(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path + "'");
  out << params_to_json(params);
}

ModelParams load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return params_from_json(ss.str());
}

}  // namespace echmm
