#pragma once

#include <string>
#include <vector>

#include "balistd/trainer.hpp"

namespace balistd {

// CSV rows: dataset,kind,severity,iou_clean,iou_cor,rce,pd,fa,seed,fa_e6.
// Severity is 1..3 for grid cells, "-" for the clean row and "avg" for the
// appended aggregate rows; IOU/Pd/Fa are raw fractions, RCE is a percentage
// (empty when undefined), fa_e6 is Fa in 1e-6 units.
void write_robustness_csv(const std::string& path, const RobustnessReport& rep,
                          const std::string& dataset_name);

// One Markdown table with the corruption kinds as columns and (IOU, RCE)
// sub-columns, severity-averaged; impulse_noise is flagged as an extra
// column beyond the usual nine-kind set.
void write_robustness_md(const std::string& path, const RobustnessReport& rep,
                         const std::string& dataset_name);

// Clean-only row: IOU, Pd, Fa (raw and 1e-6 units).
void write_clean_csv(const std::string& path, const RobustnessRecord& clean,
                     const std::string& dataset_name, std::uint64_t seed);
void write_clean_md(const std::string& path, const RobustnessRecord& clean,
                    const std::string& dataset_name);

// Re-renders the Markdown table from a robustness CSV produced above.
void render_report_from_csv(const std::string& csv_path, const std::string& md_path);

// Train-log CSV: one row per step.
void write_train_log(const std::string& path, const std::vector<TrainLogRow>& rows);

}  // namespace balistd
