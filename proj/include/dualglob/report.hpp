#pragma once

// Rendering of probe results: aligned text tables, CSV and JSON. CSV output
// starts with `# config_hash=<hash>` when a hash is given.

#include <string>
#include <vector>

#include <json.hpp>

#include "dualglob/probe.hpp"

namespace dualglob {

enum class ReportFormat { text, csv, json };

ReportFormat parse_report_format(std::string_view s);

struct ResultRow {
  std::string method;
  MetricsReport report;
  std::string config_hash;
};

// Method | Acc | F1, each as "mean ± sd" over folds.
std::string results_table(const std::vector<ResultRow>& rows, const std::string& title);
std::string results_csv(const std::vector<ResultRow>& rows);
nlohmann::json results_json(const std::vector<ResultRow>& rows);

// Gender rows against Unified / Gender-Specific column pairs.
std::string subgroup_table(const std::vector<SubgroupReport>& reports);
std::string subgroup_csv(const std::vector<SubgroupReport>& reports, const std::string& config_hash);
nlohmann::json subgroup_json(const std::vector<SubgroupReport>& reports);

// Per-class precision / recall / F1 / support, then accuracy, macro and
// support-weighted averages.
std::string class_report_table(const MetricsReport& r);
std::string class_report_csv(const MetricsReport& r, const std::string& config_hash);

// 17 columns: true label, then one count per predicted class.
std::string confusion_csv(const MetricsReport& r, const std::string& config_hash);

nlohmann::json report_json(const MetricsReport& r);

std::string hash_comment(const std::string& config_hash);

}  // namespace dualglob
