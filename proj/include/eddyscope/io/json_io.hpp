#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "eddyscope/cpt_recovery.hpp"
#include "eddyscope/dictionary.hpp"
#include "eddyscope/errors.hpp"
#include "eddyscope/io/atomic_file.hpp"
#include "eddyscope/tensor_core.hpp"

namespace eddyscope::io {

using nlohmann::json;

/// {"omega": w, "blocks": 9 x 9 array of [re, im]} in the 9x9 row-major layout.
inline json blocks_to_json(const CMat9& m) {
  json rows = json::array();
  for (int r = 0; r < 9; ++r) {
    json row = json::array();
    for (int c = 0; c < 9; ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

inline CMat9 blocks_from_json(const json& j) {
  if (!j.is_array() || j.size() != 9) fail(ErrorKind::IoError, "\"blocks\" must have 9 rows");
  CMat9 m;
  for (int r = 0; r < 9; ++r) {
    const json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || row.size() != 9) fail(ErrorKind::IoError, "\"blocks\" rows must have 9 entries");
    for (int c = 0; c < 9; ++c) {
      const json& e = row[static_cast<std::size_t>(c)];
      if (!e.is_array() || e.size() != 2) fail(ErrorKind::IoError, "tensor entries must be [re, im] pairs");
      m(r, c) = cplx(e[0].get<double>(), e[1].get<double>());
    }
  }
  return m;
}

inline json to_json(const CptTensor& m, double omega) { return {{"omega", omega}, {"blocks", blocks_to_json(m.matrix())}}; }

inline CptTensor cpt_from_json(const json& j) {
  try {
    return CptTensor(blocks_from_json(j.at("blocks")));
  } catch (const json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed CPT JSON: ") + e.what());
  }
}

inline json to_json(const Descriptor& d) { return {{"values", d.values()}, {"frequencies", d.frequencies()}}; }

inline Descriptor descriptor_from_json(const json& j) {
  try {
    return Descriptor(j.at("values").get<std::vector<double>>(), j.at("frequencies").get<std::vector<double>>());
  } catch (const json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed descriptor JSON: ") + e.what());
  }
}

inline json to_json(const DictionaryEntry& e) {
  return {{"label", e.label},
          {"frequencies", e.descriptor.frequencies()},
          {"values", e.descriptor.values()},
          {"provenance", to_string(e.provenance)}};
}

inline json to_json(const Dictionary& dict) {
  json arr = json::array();
  for (const auto& e : dict) arr.push_back(to_json(e));
  return arr;
}

/// Entries keep their stored provenance; `file` is used when none is recorded.
inline Dictionary dictionary_from_json(const json& j) {
  if (!j.is_array()) fail(ErrorKind::IoError, "dictionary JSON must be an array");
  Dictionary dict;
  try {
    for (const auto& e : j) {
      const Provenance p = e.contains("provenance") ? provenance_from_string(e.at("provenance").get<std::string>())
                                                    : Provenance::File;
      dict.push_back({e.at("label").get<std::string>(), descriptor_from_json(e), p});
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed dictionary JSON: ") + e.what());
  }
  check_unique_labels(dict);
  return dict;
}

inline json to_json(const RecoveredCpt& r) {
  return {{"omega", r.omega}, {"blocks", blocks_to_json(r.scaled_tensor.cast<cplx>())}, {"residual", r.residual}};
}

inline RecoveredCpt recovered_from_json(const json& j) {
  try {
    RecoveredCpt r;
    r.omega = j.at("omega").get<double>();
    r.residual = j.at("residual").get<double>();
    const CMat9 m = blocks_from_json(j.at("blocks"));
    if (m.imag().cwiseAbs().maxCoeff() != 0.0) fail(ErrorKind::IoError, "recovered tensor must be real");
    r.scaled_tensor = m.real();
    return r;
  } catch (const json::exception& e) {
    fail(ErrorKind::IoError, std::string("malformed recovered CPT JSON: ") + e.what());
  }
}

inline json to_json(const MatchResult& m) {
  json j = {{"best", m.best}, {"distances", m.distances}};
  if (!m.tied.empty()) j["tied"] = m.tied;
  return j;
}

inline json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::IoError, "cannot parse " + what + ": " + e.what());
  }
}

inline json read_json(const std::filesystem::path& path) { return parse_json(read_file(path), path.string()); }

inline void write_json(const std::filesystem::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

}  // namespace eddyscope::io
