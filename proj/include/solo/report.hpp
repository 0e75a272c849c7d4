#pragma once

#include <string>
#include <utility>
#include <vector>

#include "solo/training.hpp"

namespace solo {

// Parses a metrics CSV (header `epoch,train_loss,val_loss,val_accuracy,lr_last`).
std::vector<EpochMetrics> read_metrics_csv(const std::string& path);

// Parses a two-column `metric,value` summary CSV (header optional).
std::vector<std::pair<std::string, std::string>> read_summary_csv(
    const std::string& path);

// Plain-text report: per-epoch table plus key/value summary rows.
std::string render_text_report(
    const std::vector<EpochMetrics>& log,
    const std::vector<std::pair<std::string, std::string>>& summary);

// Self-contained SVG with loss curves and the validation-accuracy curve.
std::string render_svg_report(const std::vector<EpochMetrics>& log);

}  // namespace solo
