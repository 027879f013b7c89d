#include "dualglob/report.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "dualglob/error.hpp"

namespace dualglob {

using nlohmann::json;

ReportFormat parse_report_format(std::string_view s) {
  if (s == "text") return ReportFormat::text;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ConfigError("format must be text, csv or json, got '" + std::string(s) + "'");
}

std::string hash_comment(const std::string& config_hash) {
  return config_hash.empty() ? std::string() : "# config_hash=" + config_hash + "\n";
}

namespace {

std::string pm(const MetricSummary& s) { return fmt::format("{:.4f} ± {:.4f}", s.mean, s.sd); }

std::string rule(std::size_t width) {
  std::string out;
  for (std::size_t i = 0; i < width; ++i) out += "-";
  return out + "\n";
}

// Display width, counting the two-byte '±' once.
std::size_t display_width(const std::string& s) {
  std::size_t n = 0;
  for (unsigned char c : s) n += (c & 0xC0) != 0x80;
  return n;
}

std::string pad(const std::string& s, std::size_t width, bool right = false) {
  const std::size_t w = display_width(s);
  const std::string fill(width > w ? width - w : 0, ' ');
  return right ? fill + s : s + fill;
}

json summary_json(const MetricSummary& s) { return json{{"mean", s.mean}, {"sd", s.sd}}; }

}  // namespace

std::string results_table(const std::vector<ResultRow>& rows, const std::string& title) {
  std::size_t name_w = 6;
  for (const auto& r : rows) name_w = std::max(name_w, display_width(r.method));
  constexpr std::size_t kCol = 17;
  const std::size_t width = name_w + 2 * (kCol + 2);
  std::string out = title.empty() ? "" : title + "\n";
  out += rule(width);
  out += pad("Method", name_w) + "  " + pad("Acc", kCol, true) + "  " + pad("F1", kCol, true) + "\n";
  out += rule(width);
  for (const auto& r : rows)
    out += pad(r.method, name_w) + "  " + pad(pm(r.report.accuracy_folds), kCol, true) + "  " +
           pad(pm(r.report.macro_f1_folds), kCol, true) + "\n";
  out += rule(width);
  return out;
}

std::string results_csv(const std::vector<ResultRow>& rows) {
  std::string out;
  if (!rows.empty()) out += hash_comment(rows.front().config_hash);
  out += "method,acc_mean,acc_sd,f1_mean,f1_sd,folds,config_hash\n";
  for (const auto& r : rows)
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{},{}\n", r.method, r.report.accuracy_folds.mean,
                       r.report.accuracy_folds.sd, r.report.macro_f1_folds.mean, r.report.macro_f1_folds.sd,
                       r.report.fold_accuracy.size(), r.config_hash);
  return out;
}

json results_json(const std::vector<ResultRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = report_json(r.report);
    j["method"] = r.method;
    j["config_hash"] = r.config_hash;
    out.push_back(std::move(j));
  }
  return out;
}

std::string subgroup_table(const std::vector<SubgroupReport>& reports) {
  auto find = [&](SubgroupMode m, Gender g) -> const MetricsReport* {
    for (const auto& r : reports)
      if (r.mode == m && r.gender == g) return &r.report;
    return nullptr;
  };
  constexpr std::size_t kCol = 17;
  const std::size_t width = 8 + 4 * (kCol + 2);
  auto cell = [&](const MetricsReport* r, bool acc) {
    if (!r) return pad("-", kCol, true);
    return pad(pm(acc ? r->accuracy_folds : r->macro_f1_folds), kCol, true);
  };
  std::string out = rule(width);
  out += pad("", 8) + "  " + pad(std::string(to_string(SubgroupMode::unified)), 2 * kCol + 2) + "  " +
         std::string(to_string(SubgroupMode::gender_specific)) + "\n";
  out += pad("Gender", 8) + "  " + pad("Acc", kCol, true) + "  " + pad("F1", kCol, true) + "  " +
         pad("Acc", kCol, true) + "  " + pad("F1", kCol, true) + "\n";
  out += rule(width);
  for (Gender g : {Gender::male, Gender::female}) {
    const auto* u = find(SubgroupMode::unified, g);
    const auto* s = find(SubgroupMode::gender_specific, g);
    std::string name(to_string(g));
    name[0] = static_cast<char>(std::toupper(name[0]));
    out += pad(name, 8) + "  " + cell(u, true) + "  " + cell(u, false) + "  " + cell(s, true) + "  " +
           cell(s, false) + "\n";
  }
  out += rule(width);
  for (const auto& r : reports)
    for (const auto& n : r.report.notes)
      out += fmt::format("note [{} / {}]: {}\n", to_string(r.mode), to_string(r.gender), n);
  return out;
}

std::string subgroup_csv(const std::vector<SubgroupReport>& reports, const std::string& config_hash) {
  std::string out = hash_comment(config_hash);
  out += "mode,gender,acc_mean,acc_sd,f1_mean,f1_sd,macro_classes\n";
  for (const auto& r : reports)
    out += fmt::format("{},{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n",
                       r.mode == SubgroupMode::unified ? "unified" : "gender_specific", to_string(r.gender),
                       r.report.accuracy_folds.mean, r.report.accuracy_folds.sd, r.report.macro_f1_folds.mean,
                       r.report.macro_f1_folds.sd, r.report.macro_classes.size());
  return out;
}

json subgroup_json(const std::vector<SubgroupReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) {
    json j = report_json(r.report);
    j["mode"] = r.mode == SubgroupMode::unified ? "unified" : "gender_specific";
    j["gender"] = std::string(to_string(r.gender));
    out.push_back(std::move(j));
  }
  return out;
}

std::string class_report_table(const MetricsReport& r) {
  const std::size_t width = 14 + 4 * 11;
  std::string out = rule(width);
  out += fmt::format("{:<14}{:>11}{:>11}{:>11}{:>11}\n", "Tone Class", "Precision", "Recall", "F1", "Support");
  out += rule(width);
  double mp = 0, mr = 0, mf = 0, wp = 0, wr = 0, wf = 0;
  std::size_t total = 0;
  for (const auto& c : r.per_class) {
    out += fmt::format("{:<14}{:>11.2f}{:>11.2f}{:>11.2f}{:>11}\n", to_string(c.label), c.precision, c.recall,
                       c.f1, c.support);
    mp += c.precision;
    mr += c.recall;
    mf += c.f1;
    const double s = static_cast<double>(c.support);
    wp += c.precision * s;
    wr += c.recall * s;
    wf += c.f1 * s;
    total += c.support;
  }
  const double n = r.per_class.empty() ? 1.0 : static_cast<double>(r.per_class.size());
  const double t = total ? static_cast<double>(total) : 1.0;
  out += rule(width);
  out += fmt::format("{:<14}{:>33.2f}{:>11}\n", "Accuracy", r.accuracy, total);
  out += fmt::format("{:<14}{:>11.2f}{:>11.2f}{:>11.2f}{:>11}\n", "Macro Avg.", mp / n, mr / n, mf / n, total);
  out += fmt::format("{:<14}{:>11.2f}{:>11.2f}{:>11.2f}{:>11}\n", "Weighted Avg.", wp / t, wr / t, wf / t, total);
  out += rule(width);
  return out;
}

std::string class_report_csv(const MetricsReport& r, const std::string& config_hash) {
  std::string out = hash_comment(config_hash);
  out += "label,precision,recall,f1,support\n";
  for (const auto& c : r.per_class)
    out += fmt::format("{},{:.6f},{:.6f},{:.6f},{}\n", to_string(c.label), c.precision, c.recall, c.f1, c.support);
  return out;
}

std::string confusion_csv(const MetricsReport& r, const std::string& config_hash) {
  std::string out = hash_comment(config_hash);
  out += "true";
  for (std::size_t c = 0; c < kNumClasses; ++c) out += "," + std::string(to_string(tone_from_index(static_cast<int>(c))));
  out += "\n";
  for (std::size_t t = 0; t < r.confusion.size(); ++t) {
    out += std::string(to_string(tone_from_index(static_cast<int>(t))));
    for (auto v : r.confusion[t]) out += "," + std::to_string(v);
    out += "\n";
  }
  return out;
}

json report_json(const MetricsReport& r) {
  json per_class = json::array();
  for (const auto& c : r.per_class)
    per_class.push_back({{"label", std::string(to_string(c.label))},
                         {"precision", c.precision},
                         {"recall", c.recall},
                         {"f1", c.f1},
                         {"support", c.support}});
  return json{{"accuracy", r.accuracy},
              {"macro_f1", r.macro_f1},
              {"accuracy_folds", summary_json(r.accuracy_folds)},
              {"macro_f1_folds", summary_json(r.macro_f1_folds)},
              {"fold_accuracy", r.fold_accuracy},
              {"fold_macro_f1", r.fold_macro_f1},
              {"macro_classes", r.macro_classes},
              {"per_class", per_class},
              {"confusion", r.confusion},
              {"notes", r.notes}};
}

}  // namespace dualglob
