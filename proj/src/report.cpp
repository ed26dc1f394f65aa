#include "kprompt/report.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "kprompt/checkpoint.hpp"
#include "kprompt/errors.hpp"

namespace kprompt {

namespace {

struct Switches {
    const char* name;
    bool pri, mpm, pseudo, mask;
};

constexpr Switches kVariants[] = {
    {"full", true, true, true, true},       {"no_pri", false, true, true, true},
    {"no_mpm", true, false, true, true},    {"no_pseudo", true, true, false, true},
    {"no_mask", true, true, true, false},
};

std::string pct(double x) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << x;
    return os.str();
}

}  // namespace

ReportOutput run_report(const TrainerConfig& base, const DataPaths& paths,
                        const std::string& probe_path) {
    std::vector<ProbeCase> cases = load_probe_cases(probe_path);

    ReportOutput out;
    out.mpm_chance = 1.0 / (1.0 + base.pipeline.num_negatives);
    out.md_path = base.out_dir + "/report.md";
    out.csv_path = base.out_dir + "/report.csv";
    std::filesystem::create_directories(base.out_dir);

    for (const Switches& sw : kVariants) {
        TrainerConfig cfg = base;
        cfg.out_dir = base.out_dir + "/" + sw.name;
        cfg.pipeline.enable_pri = sw.pri;
        cfg.pipeline.enable_mpm = sw.mpm;
        cfg.pipeline.with_pseudo = sw.pseudo;
        cfg.pipeline.with_mask_matrix = sw.mask;

        DataBundle bundle = load_bundle(paths, cfg.pipeline);
        TrainResult tr = train(cfg, bundle);
        if (tr.epochs.empty()) throw DataError("report: variant trained zero epochs");
        const EpochStats& last = tr.epochs.back();

        Checkpoint ck = load_checkpoint(tr.final_checkpoint);
        ProbeResult pr = run_probe(ck.params, bundle.vocab, cases);

        ReportVariant v;
        v.name = sw.name;
        v.prompts_per_sentence = bundle.prompts_per_sentence;
        v.mlm = last.mlm;
        v.pri = last.pri;
        v.mpm = last.mpm;
        v.total = last.total;
        v.holdout_mpm_acc = last.holdout_mpm_acc;
        v.holdout_mpm_n = last.holdout_mpm_n;
        v.probe_p1 = pr.overall;
        v.probe_n = pr.total;
        v.probe = pr;
        out.variants.push_back(std::move(v));
    }

    std::ofstream csv(out.csv_path, std::ios::trunc);
    if (!csv) throw DataError("report: cannot write " + out.csv_path);
    csv << "variant,prompts_per_sentence,mlm,pri,mpm,total,holdout_mpm_acc,holdout_mpm_n,"
           "probe_p1,probe_n\n";
    for (const ReportVariant& v : out.variants)
        csv << v.name << ',' << pct(v.prompts_per_sentence) << ',' << pct(v.mlm) << ','
            << pct(v.pri) << ',' << pct(v.mpm) << ',' << pct(v.total) << ','
            << pct(v.holdout_mpm_acc) << ',' << v.holdout_mpm_n << ',' << pct(v.probe_p1) << ','
            << v.probe_n << '\n';

    std::ofstream md(out.md_path, std::ios::trunc);
    if (!md) throw DataError("report: cannot write " + out.md_path);
    md << "# Ablation report\n\n";
    md << "Seed " << base.seed << ", " << base.epochs << " epochs, lambda=" << base.lambda
       << ", mu=" << base.mu << ", N=" << base.pipeline.num_negatives
       << " negatives (MPM chance " << pct(out.mpm_chance) << ").\n\n";
    md << "| variant | prompts/sent | MLM | PRI | MPM | total | held-out MPM acc | probe P@1 |\n";
    md << "|---|---|---|---|---|---|---|---|\n";
    for (const ReportVariant& v : out.variants)
        md << "| " << v.name << " | " << pct(v.prompts_per_sentence) << " | " << pct(v.mlm)
           << " | " << pct(v.pri) << " | " << pct(v.mpm) << " | " << pct(v.total) << " | "
           << pct(v.holdout_mpm_acc) << " (n=" << v.holdout_mpm_n << ") | " << pct(v.probe_p1)
           << " (n=" << v.probe_n << ") |\n";
    md << "\nProbe P@1 by relation group (full model):\n\n";
    for (const auto& [group, p1] : out.variants.front().probe.group_p1)
        md << "- " << group << ": " << pct(p1) << " (n=" << out.variants.front().probe.group_n.at(group)
           << ")\n";

    return out;
}

}  // namespace kprompt
