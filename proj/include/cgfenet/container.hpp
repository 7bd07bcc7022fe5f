#pragma once

// Binary array container used for datasets, P-V-t tables and checkpoints.
//
// A record file is one UTF-8 header line describing the ordered entries
// ({name, dtype in {f32,i32}, shape}), a newline, then the raw little-endian
// array payloads concatenated in header order.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cgfenet/common.hpp"

namespace cgfenet {

using json = nlohmann::json;

struct NamedArray {
  std::string name;
  std::string dtype;  // "f32" or "i32"
  std::vector<std::int64_t> shape;
  std::vector<float> f32;
  std::vector<std::int32_t> i32;

  std::int64_t element_count() const {
    std::int64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }

  static NamedArray make_f32(std::string name, std::vector<std::int64_t> shape,
                             std::vector<float> data) {
    NamedArray a;
    a.name = std::move(name);
    a.dtype = "f32";
    a.shape = std::move(shape);
    a.f32 = std::move(data);
    check(a.element_count() == static_cast<std::int64_t>(a.f32.size()),
          "array '" + a.name + "': shape does not match payload size");
    return a;
  }

  static NamedArray make_i32(std::string name, std::vector<std::int64_t> shape,
                             std::vector<std::int32_t> data) {
    NamedArray a;
    a.name = std::move(name);
    a.dtype = "i32";
    a.shape = std::move(shape);
    a.i32 = std::move(data);
    check(a.element_count() == static_cast<std::int64_t>(a.i32.size()),
          "array '" + a.name + "': shape does not match payload size");
    return a;
  }
};

inline void write_record(const std::filesystem::path& path,
                         const std::vector<NamedArray>& arrays) {
  json header = json::array();
  for (const auto& a : arrays)
    header.push_back({{"name", a.name}, {"dtype", a.dtype}, {"shape", a.shape}});

  std::ofstream out(path, std::ios::binary);
  check(out.good(), "cannot open record file for writing: " + path.string());
  out << header.dump() << "\n";
  for (const auto& a : arrays) {
    if (a.dtype == "f32") {
      out.write(reinterpret_cast<const char*>(a.f32.data()),
                static_cast<std::streamsize>(a.f32.size() * sizeof(float)));
    } else {
      out.write(reinterpret_cast<const char*>(a.i32.data()),
                static_cast<std::streamsize>(a.i32.size() * sizeof(std::int32_t)));
    }
  }
  check(out.good(), "write failed: " + path.string());
}

inline std::vector<NamedArray> read_record(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), "cannot open record file: " + path.string());

  std::string header_line;
  check(static_cast<bool>(std::getline(in, header_line)),
        "malformed header: missing header line in " + path.string());

  json header;
  try {
    header = json::parse(header_line);
  } catch (const json::exception& e) {
    throw Error("malformed header in " + path.string() + ": " + e.what());
  }
  check(header.is_array(), "malformed header: expected a JSON array in " +
                               path.string());

  std::vector<NamedArray> arrays;
  for (const auto& entry : header) {
    check(entry.contains("name") && entry.contains("dtype") &&
              entry.contains("shape"),
          "malformed header entry in " + path.string());
    NamedArray a;
    a.name = entry["name"].get<std::string>();
    a.dtype = entry["dtype"].get<std::string>();
    a.shape = entry["shape"].get<std::vector<std::int64_t>>();
    check(a.dtype == "f32" || a.dtype == "i32",
          "unsupported dtype '" + a.dtype + "' for array '" + a.name + "'");
    const auto n = static_cast<std::size_t>(a.element_count());
    if (a.dtype == "f32") {
      a.f32.resize(n);
      in.read(reinterpret_cast<char*>(a.f32.data()),
              static_cast<std::streamsize>(n * sizeof(float)));
    } else {
      a.i32.resize(n);
      in.read(reinterpret_cast<char*>(a.i32.data()),
              static_cast<std::streamsize>(n * sizeof(std::int32_t)));
    }
    check(in.gcount() ==
              static_cast<std::streamsize>(n * (a.dtype == "f32" ? 4 : 4)),
          "truncated payload for array '" + a.name + "' in " + path.string());
    arrays.push_back(std::move(a));
  }
  return arrays;
}

/// Locate an array by name; throws if absent or of unexpected dtype/shape rank.
inline const NamedArray& find_array(const std::vector<NamedArray>& arrays,
                                    const std::string& name,
                                    const std::string& dtype) {
  for (const auto& a : arrays) {
    if (a.name == name) {
      check(a.dtype == dtype, "array '" + name + "': expected dtype " + dtype +
                                  ", found " + a.dtype);
      return a;
    }
  }
  throw Error("array '" + name + "' not found in record");
}

inline json read_json_file(const std::filesystem::path& path,
                           const std::string& what) {
  std::ifstream in(path);
  check(in.good(), what + " not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error("malformed " + what + " at " + path.string() + ": " + e.what());
  }
  return j;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  check(out.good(), "cannot open for writing: " + path.string());
  out << j.dump(2) << "\n";
  check(out.good(), "write failed: " + path.string());
}

}  // namespace cgfenet
