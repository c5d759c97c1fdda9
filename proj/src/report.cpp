#include "onoff/report.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "onoff/corpus.hpp"
#include "onoff/error.hpp"

namespace onoff {

ReportFormat report_format_from_token(const std::string& tok) {
  if (tok == "tsv") return ReportFormat::Tsv;
  if (tok == "json") return ReportFormat::Json;
  if (tok == "md") return ReportFormat::Md;
  throw ParseError("unknown report format '" + tok + "'");
}

namespace {

using nlohmann::json;

struct Cell {
  double mean = 0.0;
  double stddev = 0.0;
};

struct GenderRow {
  std::string mode;  // independent / dependent
  std::string model;
  std::string feature_set;
  std::string task;
  Cell all, male, female;
};

// row key: model, strategy, feature_set (the table-2 nesting order)
using RowKey = std::tuple<std::string, std::string, std::string>;

struct ReportData {
  std::map<RowKey, std::map<std::string, Cell>> matrix;
  std::vector<GenderRow> gender_rows;
};

int rank_of(const std::vector<std::string>& order, const std::string& v) {
  const auto it = std::find(order.begin(), order.end(), v);
  return it == order.end() ? static_cast<int>(order.size())
                           : static_cast<int>(it - order.begin());
}

std::vector<RowKey> sorted_keys(const ReportData& data) {
  static const std::vector<std::string> model_order = {"svm", "adnn"};
  static const std::vector<std::string> strategy_order = {"specific", "grouping",
                                                          "independent"};
  static const std::vector<std::string> feature_order = {"egemaps", "w2v2"};
  std::vector<RowKey> keys;
  for (const auto& [key, cells] : data.matrix) keys.push_back(key);
  std::sort(keys.begin(), keys.end(), [](const RowKey& a, const RowKey& b) {
    const auto ra = std::make_tuple(rank_of(model_order, std::get<0>(a)),
                                    rank_of(strategy_order, std::get<1>(a)),
                                    rank_of(feature_order, std::get<2>(a)));
    const auto rb = std::make_tuple(rank_of(model_order, std::get<0>(b)),
                                    rank_of(strategy_order, std::get<1>(b)),
                                    rank_of(feature_order, std::get<2>(b)));
    return ra < rb;
  });
  return keys;
}

ReportData collect(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw IoError("results directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".json") {
      files.push_back(entry.path());
    }
  }
  std::sort(files.begin(), files.end());

  ReportData data;
  for (const auto& file : files) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot open " + file.string());
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ParseError("bad JSON in " + file.string() + ": " + e.what());
    }
    if (!j.contains("config") || !j.contains("summary")) continue;

    const auto& cfg = j["config"];
    const std::string model = cfg.value("model", "?");
    const std::string strategy = cfg.value("strategy", "?");
    const std::string feature_set = cfg.value("feature_set", "?");
    const std::string task = cfg.value("target_task", "?");

    Cell cell{j["summary"].value("mean", 0.0), j["summary"].value("stddev", 0.0)};
    data.matrix[{model, strategy, feature_set}][task] = cell;

    auto read_breakdown = [&](const char* key, const std::string& mode) {
      if (!j.contains(key)) return;
      const auto& g = j[key];
      GenderRow row;
      row.mode = mode;
      row.model = model;
      row.feature_set = feature_set;
      row.task = task;
      auto cell_of = [&](const char* name) {
        Cell c;
        if (g.contains(name)) {
          c.mean = g[name].value("mean", 0.0);
          c.stddev = g[name].value("stddev", 0.0);
        }
        return c;
      };
      row.all = cell_of("all");
      row.male = cell_of("male");
      row.female = cell_of("female");
      data.gender_rows.push_back(std::move(row));
    };
    read_breakdown("gender_independent", "independent");
    read_breakdown("gender_dependent", "dependent");
  }
  return data;
}

std::string fmt_cell(const std::optional<Cell>& c) {
  if (!c) return "-";
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.1f±%.1f", c->mean * 100.0, c->stddev * 100.0);
  return buf;
}

std::vector<std::string> task_columns() {
  std::vector<std::string> cols;
  for (Task t : all_tasks()) cols.push_back(to_token(t));
  return cols;
}

std::string render_tsv(const ReportData& data) {
  std::string out = "model\tstrategy\tfeatures";
  for (const auto& t : task_columns()) out += '\t' + t;
  out += '\n';
  for (const auto& key : sorted_keys(data)) {
    const auto& cells = data.matrix.at(key);
    out += std::get<0>(key) + '\t' + std::get<1>(key) + '\t' + std::get<2>(key);
    for (const auto& t : task_columns()) {
      const auto it = cells.find(t);
      out += '\t' + fmt_cell(it == cells.end() ? std::nullopt
                                               : std::optional<Cell>(it->second));
    }
    out += '\n';
  }
  if (!data.gender_rows.empty()) {
    out += "\ngender_mode\tmodel\tfeatures\ttask\tAll\tMale\tFemale\n";
    for (const auto& row : data.gender_rows) {
      out += row.mode + '\t' + row.model + '\t' + row.feature_set + '\t' +
             row.task + '\t' + fmt_cell(row.all) + '\t' + fmt_cell(row.male) +
             '\t' + fmt_cell(row.female) + '\n';
    }
  }
  return out;
}

std::string render_md(const ReportData& data) {
  std::string out = "| model | strategy | features |";
  for (const auto& t : task_columns()) out += ' ' + t + " |";
  out += "\n|---|---|---|";
  for (std::size_t i = 0; i < task_columns().size(); ++i) out += "---|";
  out += '\n';
  for (const auto& key : sorted_keys(data)) {
    const auto& cells = data.matrix.at(key);
    out += "| " + std::get<0>(key) + " | " + std::get<1>(key) + " | " +
           std::get<2>(key) + " |";
    for (const auto& t : task_columns()) {
      const auto it = cells.find(t);
      out += ' ' +
             fmt_cell(it == cells.end() ? std::nullopt
                                        : std::optional<Cell>(it->second)) +
             " |";
    }
    out += '\n';
  }
  if (!data.gender_rows.empty()) {
    out += "\n| gender mode | model | features | task | All | Male | Female |\n";
    out += "|---|---|---|---|---|---|---|\n";
    for (const auto& row : data.gender_rows) {
      out += "| " + row.mode + " | " + row.model + " | " + row.feature_set +
             " | " + row.task + " | " + fmt_cell(row.all) + " | " +
             fmt_cell(row.male) + " | " + fmt_cell(row.female) + " |\n";
    }
  }
  return out;
}

std::string render_json(const ReportData& data) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& key : sorted_keys(data)) {
    nlohmann::ordered_json row;
    row["model"] = std::get<0>(key);
    row["strategy"] = std::get<1>(key);
    row["features"] = std::get<2>(key);
    nlohmann::ordered_json cells;
    for (const auto& t : task_columns()) {
      const auto& m = data.matrix.at(key);
      const auto it = m.find(t);
      if (it == m.end()) {
        cells[t] = nullptr;
      } else {
        cells[t] = {{"mean", it->second.mean}, {"stddev", it->second.stddev}};
      }
    }
    row["tasks"] = std::move(cells);
    rows.push_back(std::move(row));
  }
  j["results"] = std::move(rows);

  nlohmann::ordered_json gender = nlohmann::ordered_json::array();
  for (const auto& row : data.gender_rows) {
    gender.push_back(
        {{"gender_mode", row.mode},
         {"model", row.model},
         {"features", row.feature_set},
         {"task", row.task},
         {"all", {{"mean", row.all.mean}, {"stddev", row.all.stddev}}},
         {"male", {{"mean", row.male.mean}, {"stddev", row.male.stddev}}},
         {"female", {{"mean", row.female.mean}, {"stddev", row.female.stddev}}}});
  }
  j["gender"] = std::move(gender);
  return j.dump(2) + "\n";
}

}  // namespace

std::string render_report(const std::filesystem::path& results_dir,
                          ReportFormat format) {
  const ReportData data = collect(results_dir);
  switch (format) {
    case ReportFormat::Tsv: return render_tsv(data);
    case ReportFormat::Md: return render_md(data);
    case ReportFormat::Json: return render_json(data);
  }
  throw InvalidArgumentError("invalid report format");
}

}  // namespace onoff
