#pragma once

#include <cmath>
#include <cstdio>
#include <string>

#include <json.hpp>

#include "hetcoef/error.hpp"
#include "hetcoef/estimation.hpp"

namespace hetcoef {

// Deterministic JSON emission for the reports: insertion-ordered keys and all
// floating-point numbers rendered with 12 significant digits, so identical
// inputs produce byte-identical files.

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string format_sig12(double x) {
  if (!std::isfinite(x)) throw Error("INVALID_ARGUMENT", "non-finite number in report");
  if (x == 0.0) return "0";  // also normalizes -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

inline void append_escaped(const std::string& s, std::string& out) {
  out += '"';
  for (const char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(c) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += c;
        }
    }
  }
  out += '"';
}

inline void dump_json_value(const Json& j, std::string& out, int depth) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const std::string pad_in(static_cast<std::size_t>(depth + 1) * 2, ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        append_escaped(key, out);
        out += ": ";
        dump_json_value(value, out, depth + 1);
      }
      out += '\n' + pad + '}';
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += '[';
      bool first = true;
      for (const auto& value : j) {
        if (!first) out += ", ";
        first = false;
        dump_json_value(value, out, depth + 1);
      }
      out += ']';
      return;
    }
    case Json::value_t::string:
      append_escaped(j.get<std::string>(), out);
      return;
    case Json::value_t::boolean:
      out += j.get<bool>() ? "true" : "false";
      return;
    case Json::value_t::number_integer:
      out += std::to_string(j.get<std::int64_t>());
      return;
    case Json::value_t::number_unsigned:
      out += std::to_string(j.get<std::uint64_t>());
      return;
    case Json::value_t::number_float:
      out += format_sig12(j.get<double>());
      return;
    default:
      out += "null";
      return;
  }
}

}  // namespace detail

inline std::string dump_json(const Json& j) {
  std::string out;
  detail::dump_json_value(j, out, 0);
  out += '\n';
  return out;
}

inline Json to_json(const Vector& v) {
  Json arr = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Json to_json(const GpsVector& g) {
  Json arr = Json::array();
  for (double p : g.probs()) arr.push_back(p);
  return arr;
}

inline Json to_json(const IdentificationReport& report, Mode mode) {
  Json j;
  j["report"] = "audit";
  j["mode"] = std::string(to_string(mode));
  j["identified"] = report.identified;
  j["n_cells"] = report.n_cells;
  j["n_failing"] = report.n_failing;
  Json cells = Json::array();
  for (const auto& cell : report.cells) {
    Json c;
    c["cell_id"] = cell.cell_id;
    c["n_obs"] = cell.n_obs;
    c["gps"] = cell.gps_hat ? to_json(*cell.gps_hat) : Json(nullptr);
    c["gps_sum"] = cell.gps_sum ? Json(*cell.gps_sum) : Json(nullptr);
    c["min_gps"] = cell.min_gps ? Json(*cell.min_gps) : Json(nullptr);
    c["lambda_min"] = cell.lambda_min;
    c["verdict"] = cell.identified ? "IDENTIFIED" : "NOT_IDENTIFIED";
    c["reason"] = cell.reason ? Json(std::string(to_string(*cell.reason))) : Json(nullptr);
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j;
}

inline Json to_json(const AsfEstimate& est, Mode mode, std::size_t n_obs) {
  Json j;
  j["report"] = "estimate";
  j["mode"] = std::string(to_string(mode));
  j["n_obs"] = n_obs;
  j["eq_mean"] = to_json(est.eq_mean);
  j["ate"] = to_json(est.ate);
  j["trimmed_mass"] = est.trimmed_mass;
  Json cells = Json::array();
  for (const auto& cell : est.cells) {
    Json c;
    c["cell_id"] = cell.cell_id;
    c["n_obs"] = cell.n_obs;
    c["lambda_min"] = cell.lambda_min_hat;
    c["gps"] = cell.gps_hat ? to_json(*cell.gps_hat) : Json(nullptr);
    c["retained"] = cell.q_hat.has_value();
    c["reason"] = cell.failure ? Json(std::string(to_string(*cell.failure))) : Json(nullptr);
    c["q_hat"] = cell.q_hat ? to_json(*cell.q_hat) : Json(nullptr);
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  return j;
}

}  // namespace hetcoef
