#pragma once

#include <string>
#include <utility>
#include <vector>

#include "config.hpp"

namespace ifcalc::cli {

struct Report {
  json body;
  std::vector<std::pair<std::string, std::string>> tables;  // file stem, CSV text
};

Report cmd_influence(const Config& cfg);
Report cmd_check(const Config& cfg);
Report cmd_bias_order(const Config& cfg);
Report cmd_mc(const Config& cfg);
Report cmd_bound(const Config& cfg);
Report cmd_audit(const Config& cfg);

// Metadata block shared by every report.
json report_metadata(const std::string& command, const Config& cfg);

// Writes report.json and/or <stem>.csv into the output directory, or to
// stdout when no directory is configured.
void emit(const Report& report, const Config& cfg);

}  // namespace ifcalc::cli
