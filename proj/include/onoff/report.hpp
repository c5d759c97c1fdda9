#pragma once

#include <filesystem>
#include <string>

namespace onoff {

enum class ReportFormat { Tsv, Json, Md };

ReportFormat report_format_from_token(const std::string& tok);

// Reads every result .json under results_dir and renders a results matrix
// (model x strategy x feature set rows, one column per task) followed by the
// per-gender tables of any experiment carrying them. Values are percent F1,
// "mean±std".
std::string render_report(const std::filesystem::path& results_dir,
                          ReportFormat format);

}  // namespace onoff
