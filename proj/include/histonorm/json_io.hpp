#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "histonorm/error.hpp"
#include "histonorm/layers.hpp"
#include "histonorm/tensor.hpp"

namespace histonorm {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline void dump_json(const Json& j, std::string& out, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += Json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump_json(it.value(), out, indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case Json::value_t::array: {
      // Numeric arrays stay on one line.
      bool scalar = true;
      for (const auto& e : j) scalar = scalar && e.is_primitive();
      out += '[';
      bool first = true;
      for (const auto& e : j) {
        if (!first) out += scalar ? ", " : ",";
        first = false;
        if (!scalar) newline(depth + 1);
        dump_json(e, out, indent, depth + 1);
      }
      if (!scalar && !j.empty()) newline(depth);
      out += ']';
      return;
    }
    case Json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
  }
}

}  // namespace detail

// Serializes with every double as %.17g so values round-trip exactly.
inline std::string dump_json(const Json& j, int indent = 2) {
  std::string out;
  detail::dump_json(j, out, indent, 0);
  out += '\n';
  return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write '" + path.string() + "'");
  out << text;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Json load_json(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

inline Json tensor_values_json(const Tensor& t) {
  Json arr = Json::array();
  for (double v : t.values()) arr.push_back(v);
  return arr;
}

inline Json shape_json(const Shape& s) {
  Json arr = Json::array();
  for (auto e : s) arr.push_back(e);
  return arr;
}

inline Tensor tensor_from_json(const Json& values, Shape shape) {
  if (!values.is_array()) throw ParseError("expected a numeric array");
  std::vector<double> v;
  v.reserve(values.size());
  for (const auto& e : values) {
    if (!e.is_number()) throw ParseError("expected a number in tensor data");
    v.push_back(e.get<double>());
  }
  return Tensor(std::move(shape), std::move(v));
}

inline Json layer_json(const DenseLayer& l) {
  Json j;
  j["shape"] = shape_json(l.weights.shape());
  j["weights"] = tensor_values_json(l.weights);
  j["bias"] = tensor_values_json(l.bias);
  j["activation"] = std::string(to_string(l.activation));
  if (l.activation == Activation::leaky_relu) j["slope"] = l.slope;
  return j;
}

inline DenseLayer dense_from_json(const Json& j) {
  try {
    const auto shape = j.at("shape").get<Shape>();
    if (shape.size() != 2) throw ParseError("dense layer shape must have two extents");
    DenseLayer l{tensor_from_json(j.at("weights"), shape), tensor_from_json(j.at("bias"), {shape[0]}),
                 parse_activation(j.at("activation").get<std::string>()),
                 j.value("slope", kDefaultLeakySlope)};
    validate(l);
    return l;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("dense layer: ") + e.what());
  }
}

inline Json layer_json(const Conv2dLayer& l) {
  Json j;
  j["shape"] = shape_json(l.kernels.shape());
  j["weights"] = tensor_values_json(l.kernels);
  j["bias"] = tensor_values_json(l.bias);
  j["padding"] = l.padding;
  j["activation"] = std::string(to_string(l.activation));
  if (l.activation == Activation::leaky_relu) j["slope"] = l.slope;
  return j;
}

inline Conv2dLayer conv_from_json(const Json& j) {
  try {
    const auto shape = j.at("shape").get<Shape>();
    if (shape.size() != 4) throw ParseError("conv layer shape must have four extents");
    Conv2dLayer l{tensor_from_json(j.at("weights"), shape), tensor_from_json(j.at("bias"), {shape[0]}),
                  j.at("padding").get<std::size_t>(), parse_activation(j.at("activation").get<std::string>()),
                  j.value("slope", kDefaultLeakySlope)};
    validate(l);
    return l;
  } catch (const Json::exception& e) {
    throw ParseError(std::string("conv layer: ") + e.what());
  }
}

// Minimal CSV writer; doubles use %.17g.
class CsvWriter {
 public:
  explicit CsvWriter(const std::vector<std::string>& header) { row_strings(header); }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ","), first = false, cell(cells)), ...);
    out_ << '\n';
  }
  void row_strings(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }
  std::string str() const { return out_.str(); }

 private:
  void cell(double v) { out_ << format_double(v); }
  void cell(const std::string& s) { out_ << s; }
  void cell(const char* s) { out_ << s; }
  template <class T>
    requires std::is_integral_v<T>
  void cell(T v) { out_ << v; }

  std::ostringstream out_;
};

}  // namespace histonorm
