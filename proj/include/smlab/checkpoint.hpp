#pragma once

// Checkpoints: named parameter arrays with explicit shapes plus a metadata
// object, stored as JSON. Doubles are written in shortest round-trip form, so
// every bit of every value survives save -> load.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "smlab/errors.hpp"
#include "smlab/nn.hpp"

namespace smlab {

struct NamedArray {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

class Checkpoint {
 public:
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, NamedArray> arrays;

  template <class Derived>
  void put_array(const std::string& name, const Eigen::MatrixBase<Derived>& m) {
    NamedArray a;
    a.rows = m.rows();
    a.cols = m.cols();
    a.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) a.data.push_back(static_cast<double>(m(r, c)));
    arrays[name] = std::move(a);
  }

  template <class T>
  void get_array(const std::string& name, Matrix<T>& m) const {
    const auto it = arrays.find(name);
    if (it == arrays.end()) throw UsageError("checkpoint: missing array '" + name + "'");
    const auto& a = it->second;
    if (a.rows != m.rows() || a.cols != m.cols()) {
      throw UsageError("checkpoint: shape mismatch for '" + name + "'");
    }
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = T(a.data[static_cast<std::size_t>(r * a.cols + c)]);
  }

  bool has_array(const std::string& name) const { return arrays.count(name) != 0; }

  // Value plus Adam moments and step count.
  template <class T>
  void put(const Param<T>& p) {
    put_array(p.name, p.value);
    put_array(p.name + "#adam_m", p.adam_m);
    put_array(p.name + "#adam_v", p.adam_v);
    meta["adam_steps"][p.name] = p.step_count;
  }

  template <class T>
  void get(Param<T>& p) const {
    get_array(p.name, p.value);
    if (has_array(p.name + "#adam_m")) {
      get_array(p.name + "#adam_m", p.adam_m);
      get_array(p.name + "#adam_v", p.adam_v);
    }
    if (meta.contains("adam_steps") && meta["adam_steps"].contains(p.name)) {
      p.step_count = meta["adam_steps"][p.name].template get<std::uint64_t>();
    }
    p.grad.setZero();
    p.touch();
  }

  template <class T>
  void put_all(const std::vector<Param<T>*>& params) {
    for (const auto* p : params) put(*p);
  }
  template <class T>
  void get_all(const std::vector<Param<T>*>& params) const {
    for (auto* p : params) get(*p);
  }

  std::string dump() const {
    nlohmann::json j;
    j["format"] = "smlab-checkpoint";
    j["version"] = 1;
    j["meta"] = meta;
    auto& arr = j["arrays"];
    arr = nlohmann::json::object();
    for (const auto& [name, a] : arrays) {
      arr[name] = {{"shape", {a.rows, a.cols}}, {"data", a.data}};
    }
    return j.dump();
  }

  static Checkpoint parse(const std::string& text) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError(std::string("checkpoint: malformed JSON: ") + e.what());
    }
    if (j.value("format", "") != "smlab-checkpoint") throw UsageError("checkpoint: not an smlab checkpoint");
    Checkpoint c;
    c.meta = j.at("meta");
    for (const auto& [name, v] : j.at("arrays").items()) {
      NamedArray a;
      a.rows = v.at("shape").at(0).get<std::int64_t>();
      a.cols = v.at("shape").at(1).get<std::int64_t>();
      a.data = v.at("data").get<std::vector<double>>();
      if (static_cast<std::int64_t>(a.data.size()) != a.rows * a.cols) {
        throw UsageError("checkpoint: array '" + name + "' has wrong element count");
      }
      c.arrays[name] = std::move(a);
    }
    return c;
  }

  void save(const std::string& path) const {
    const std::string tmp = path + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      if (!out) throw UsageError("checkpoint: cannot write " + tmp);
      out << dump();
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw UsageError("checkpoint: cannot rename to " + path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("checkpoint: cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }
};

}  // namespace smlab
