#pragma once

// File formats and report serialization.
//
//   kernel:  {"order": p, "alphabet": m, "values": [m^p reals, lexicographic]}
//   measure: {"weights": [m reals]}
//   pattern: {"p": p, "adjacency": [[0/1, ...], ...]}
//   kappa:   {"kappa": {"<order>": value, ...}} or the inner object alone
//
// Reports are written with a fixed key order and every floating-point number
// printed with 17 significant digits, so equal inputs give equal bytes.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ustat/bounds.hpp"
#include "ustat/errors.hpp"
#include "ustat/geomgraph.hpp"
#include "ustat/tensor.hpp"

namespace ustat {

using Json = nlohmann::ordered_json;

/// Raised for unreadable or malformed input files; field names the flag or
/// key at fault.
class InputError : public ConfigurationError {
public:
  InputError(const std::string& field, const std::string& detail)
      : ConfigurationError(field + ": " + detail), field_(field) {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

inline Json read_json_file(const std::string& path, const std::string& field) {
  std::ifstream in(path);
  if (!in) throw InputError(field, "cannot read file '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(field, "invalid JSON in '" + path + "': " + e.what());
  }
}

namespace detail {

template <typename T>
T json_get(const Json& j, const char* key, const std::string& field) {
  if (!j.is_object() || !j.contains(key)) throw InputError(field, std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InputError(field, std::string("key '") + key + "' has the wrong type");
  }
}

}  // namespace detail

inline Tensor tensor_from_json(const Json& j, const std::string& field) {
  const int order = detail::json_get<int>(j, "order", field);
  const int alphabet = detail::json_get<int>(j, "alphabet", field);
  auto values = detail::json_get<std::vector<double>>(j, "values", field);
  if (order < 0 || alphabet < 1) throw InputError(field, "order must be >= 0 and alphabet >= 1");
  try {
    return Tensor(order, alphabet, std::move(values));
  } catch (const DimensionError& e) {
    throw InputError(field, e.what());
  }
}

inline Json tensor_to_json(const Tensor& t) {
  Json j;
  j["order"] = t.order();
  j["alphabet"] = t.alphabet();
  j["values"] = std::vector<double>(t.values().begin(), t.values().end());
  return j;
}

inline SymmetricKernel load_kernel(const std::string& path, const std::string& field) {
  auto tensor = tensor_from_json(read_json_file(path, field), field);
  try {
    return SymmetricKernel(std::move(tensor));
  } catch (const PreconditionError& e) {
    throw InputError(field, e.what());
  }
}

inline DiscreteMeasure measure_from_json(const Json& j, const std::string& field) {
  try {
    return DiscreteMeasure(detail::json_get<std::vector<double>>(j, "weights", field));
  } catch (const InputError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(field, e.what());
  }
}

inline DiscreteMeasure load_measure(const std::string& path, const std::string& field) {
  return measure_from_json(read_json_file(path, field), field);
}

inline GraphPattern pattern_from_json(const Json& j, const std::string& field) {
  const int p = detail::json_get<int>(j, "p", field);
  const auto adjacency = detail::json_get<std::vector<std::vector<int>>>(j, "adjacency", field);
  if (static_cast<int>(adjacency.size()) != p) throw InputError(field, "adjacency must have p rows");
  try {
    return GraphPattern::from_adjacency(adjacency);
  } catch (const CapacityError&) {
    throw;
  } catch (const Error& e) {
    throw InputError(field, e.what());
  }
}

inline Json pattern_to_json(const GraphPattern& g) {
  Json j;
  j["p"] = g.p();
  j["adjacency"] = g.adjacency();
  return j;
}

inline KappaConfig kappa_from_json(const Json& j, const std::string& field) {
  const Json& table = (j.is_object() && j.contains("kappa")) ? j.at("kappa") : j;
  if (!table.is_object()) throw InputError(field, "kappa table must be an object keyed by order");
  KappaConfig config;
  for (const auto& [key, value] : table.items()) {
    int order = 0;
    try {
      std::size_t used = 0;
      order = std::stoi(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw InputError(field, "kappa key '" + key + "' is not an order");
    }
    if (!value.is_number() || !(value.get<double>() > 0.0)) {
      throw InputError(field, "kappa_" + key + " must be a positive number");
    }
    config.kappa[order] = value.get<double>();
  }
  return config;
}

inline Json bound_report_to_json(const BoundReport& r) {
  Json j;
  j["total"] = r.total;
  j["constant_mode"] = r.constant_mode;
  Json terms = Json::object();
  for (const auto& [k, v] : r.terms) terms[k] = v;
  j["terms"] = terms;
  Json extras = Json::object();
  for (const auto& [k, v] : r.extras) extras[k] = v;
  j["extras"] = extras;
  Json notes = Json::object();
  for (const auto& [k, v] : r.notes) notes[k] = v;
  j["notes"] = notes;
  return j;
}

/// %.17g, with non-finite values written as null.
inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void emit_json(const Json& j, std::string& out, int indent, int depth) {
  const std::string pad(static_cast<std::size_t>(indent * (depth + 1)), ' ');
  const std::string close_pad(static_cast<std::size_t>(indent * depth), ' ');
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
        out += pad + Json(key).dump() + ": ";
        emit_json(value, out, indent, depth + 1);
      }
      out += "\n" + close_pad + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_primitive(); });
      if (flat) {
        out += "[";
        for (std::size_t i = 0; i < j.size(); ++i) {
          if (i) out += ", ";
          emit_json(j[i], out, indent, depth + 1);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ",\n";
        out += pad;
        emit_json(j[i], out, indent, depth + 1);
      }
      out += "\n" + close_pad + "]";
      return;
    }
    case Json::value_t::number_float: out += format_double(j.get<double>()); return;
    default: out += j.dump(); return;
  }
}

}  // namespace detail

/// Canonical text of a report: fixed key order (insertion order), two-space
/// indentation, floats at 17 significant digits, trailing newline.
inline std::string to_canonical_string(const Json& j) {
  std::string out;
  detail::emit_json(j, out, 2, 0);
  out += "\n";
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text, const std::string& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError(field, "cannot write file '" + path + "'");
  out << text;
  if (!out) throw InputError(field, "failed writing '" + path + "'");
}

}  // namespace ustat
