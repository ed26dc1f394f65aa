#pragma once

#include <string>
#include <vector>

#include "kprompt/probe.hpp"
#include "kprompt/trainer.hpp"

namespace kprompt {

struct ReportVariant {
    std::string name;
    double prompts_per_sentence = 0.0;
    double mlm = 0.0, pri = 0.0, mpm = 0.0, total = 0.0;  // final-epoch means
    double holdout_mpm_acc = 0.0;
    int holdout_mpm_n = 0;
    double probe_p1 = 0.0;
    int probe_n = 0;
    ProbeResult probe;
};

struct ReportOutput {
    std::vector<ReportVariant> variants;  // full, no_pri, no_mpm, no_pseudo, no_mask
    double mpm_chance = 0.0;
    std::string md_path;
    std::string csv_path;
};

// Trains the full model plus one variant per disabled switch (PRI, MPM,
// pseudo tokens, mask matrix) under the same seed, then scores each on the
// held-out MPM split and the probe set. Writes report.md and report.csv
// under base.out_dir; each variant trains in base.out_dir/<name>/.
ReportOutput run_report(const TrainerConfig& base, const DataPaths& paths,
                        const std::string& probe_path);

}  // namespace kprompt
