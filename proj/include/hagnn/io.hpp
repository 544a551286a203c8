#pragma once

// On-disk layout of a cohort directory and the per-run manifest.
//
//   dir/manifest.json   what produced this directory (command, version,
//                       seed, options); byte-identical across equal runs
//   dir/cohort.json     subjects, visit metadata, relative data paths
//   dir/ts/<id>_vNN.csv raw time series, header t,ch0,...
//   dir/fc/<id>_vNN.csv R x R connectivity matrices

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hagnn/cohort.hpp"
#include "hagnn/connectome.hpp"
#include "hagnn/csv.hpp"
#include "hagnn/errors.hpp"
#include "hagnn/version.hpp"

namespace hagnn {

struct RunManifest {
  std::string command;
  std::string version = kVersionString;
  std::uint64_t seed = 0;
  nlohmann::ordered_json options = nlohmann::ordered_json::object();
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
};

inline nlohmann::ordered_json manifest_to_json(const RunManifest& m) {
  nlohmann::ordered_json j;
  j["command"] = m.command;
  j["version"] = m.version;
  j["seed"] = m.seed;
  j["options"] = m.options;
  j["inputs"] = m.inputs;
  return j;
}

inline void write_manifest(const std::string& dir, const RunManifest& m) {
  std::ofstream out(dir + "/manifest.json");
  if (!out) throw IoError("cannot write " + dir + "/manifest.json");
  out << manifest_to_json(m).dump(2) << '\n';
}

inline RunManifest read_manifest(const std::string& dir) {
  std::string path = dir + "/manifest.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.options = j.at("options");
    m.inputs = j.at("inputs");
    return m;
  } catch (const nlohmann::ordered_json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

// Wall-clock stage timings live outside the manifest so that identical runs
// still produce identical manifests.
inline void write_timings(
    const std::string& dir,
    const std::vector<std::pair<std::string, double>>& stages) {
  std::ofstream out(dir + "/timings.txt");
  if (!out) throw IoError("cannot write " + dir + "/timings.txt");
  char buf[64];
  for (const auto& [stage, seconds] : stages) {
    std::snprintf(buf, sizeof(buf), "%.3f", seconds);
    out << stage << ": " << buf << " s\n";
  }
}

inline std::string visit_file_stem(const std::string& id, std::size_t visit) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "_v%02zu", visit);
  return id + buf;
}

inline void write_ts_csv(const std::string& path, const Tensor& bold) {
  std::vector<std::string> header;
  header.reserve(bold.cols() + 1);
  header.emplace_back("t");
  for (std::size_t j = 0; j < bold.cols(); ++j)
    header.push_back("ch" + std::to_string(j));
  Tensor with_index(bold.rows(), bold.cols() + 1);
  for (std::size_t i = 0; i < bold.rows(); ++i) {
    with_index.at(i, 0) = static_cast<double>(i);
    for (std::size_t j = 0; j < bold.cols(); ++j)
      with_index.at(i, j + 1) = bold.at(i, j);
  }
  write_matrix_csv(path, with_index, header);
}

inline Tensor read_ts_csv(const std::string& path) {
  Tensor with_index = read_matrix_csv(path, true);
  if (with_index.cols() < 3)
    throw IoError(path + ": expected a t column plus at least 2 channels");
  Tensor bold(with_index.rows(), with_index.cols() - 1);
  for (std::size_t i = 0; i < bold.rows(); ++i)
    for (std::size_t j = 0; j < bold.cols(); ++j)
      bold.at(i, j) = with_index.at(i, j + 1);
  return bold;
}

struct CohortDir {
  std::vector<Subject> subjects;
  std::size_t roi_count = 0;
  std::vector<std::size_t> channel_rois;  // channel index -> ROI id
};

// Writes cohort.json plus a ts/ file per visit holding raw series and an fc/
// file per visit holding a computed connectivity matrix.
inline void save_cohort(const std::string& dir, const CohortDir& cohort) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir + ": " + ec.message());

  bool any_ts = false, any_fc = false;
  for (const Subject& s : cohort.subjects)
    for (const Visit& v : s.visits) {
      any_ts = any_ts || v.bold.has_value();
      any_fc = any_fc || v.fc.has_value();
    }
  if (any_ts) fs::create_directories(dir + "/ts", ec);
  if (any_fc) fs::create_directories(dir + "/fc", ec);

  nlohmann::ordered_json j;
  j["roi_count"] = cohort.roi_count;
  j["channel_rois"] = cohort.channel_rois;
  j["subjects"] = nlohmann::ordered_json::array();
  for (const Subject& s : cohort.subjects) {
    nlohmann::ordered_json subj;
    subj["id"] = s.id;
    subj["label"] = to_string(s.label());
    subj["visits"] = nlohmann::ordered_json::array();
    for (std::size_t v = 0; v < s.visits.size(); ++v) {
      const Visit& visit = s.visits[v];
      nlohmann::ordered_json jv;
      jv["month_offset"] = visit.month_offset;
      jv["diagnosis"] = to_string(visit.diagnosis);
      std::string stem = visit_file_stem(s.id, v);
      if (visit.bold.has_value()) {
        std::string rel = "ts/" + stem + ".csv";
        write_ts_csv(dir + "/" + rel, *visit.bold);
        jv["bold_path"] = rel;
      }
      if (visit.fc.has_value()) {
        std::string rel = "fc/" + stem + ".csv";
        write_matrix_csv(dir + "/" + rel, visit.fc->values);
        jv["fc_path"] = rel;
      }
      subj["visits"].push_back(jv);
    }
    j["subjects"].push_back(subj);
  }
  std::ofstream out(dir + "/cohort.json");
  if (!out) throw IoError("cannot write " + dir + "/cohort.json");
  out << j.dump(2) << '\n';
}

inline CohortDir load_cohort(const std::string& dir) {
  std::string path = dir + "/cohort.json";
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::ordered_json j;
  try {
    in >> j;
  } catch (const nlohmann::ordered_json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  CohortDir cohort;
  try {
    cohort.roi_count = j.at("roi_count").get<std::size_t>();
    cohort.channel_rois =
        j.at("channel_rois").get<std::vector<std::size_t>>();
    for (const auto& subj : j.at("subjects")) {
      std::vector<Visit> visits;
      for (const auto& jv : subj.at("visits")) {
        Visit visit;
        visit.month_offset = jv.at("month_offset").get<double>();
        visit.diagnosis =
            diagnosis_from_string(jv.at("diagnosis").get<std::string>());
        if (jv.contains("bold_path"))
          visit.bold = read_ts_csv(dir + "/" +
                                   jv.at("bold_path").get<std::string>());
        if (jv.contains("fc_path"))
          visit.fc = fc_from_values(read_matrix_csv(
              dir + "/" + jv.at("fc_path").get<std::string>(), false));
        visits.push_back(std::move(visit));
      }
      cohort.subjects.push_back(
          make_subject(subj.at("id").get<std::string>(), std::move(visits)));
    }
  } catch (const nlohmann::ordered_json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return cohort;
}

}  // namespace hagnn
