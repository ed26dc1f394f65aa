#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "kprompt/checkpoint.hpp"
#include "kprompt/config.hpp"
#include "kprompt/errors.hpp"
#include "kprompt/pipeline.hpp"
#include "kprompt/probe.hpp"
#include "kprompt/report.hpp"
#include "kprompt/trainer.hpp"

namespace {

using json = nlohmann::json;
using namespace kprompt;

struct Cli {
    std::string config_path;
    std::vector<std::string> sets;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out_dir;
};

Config load_config(const Cli& cli) {
    Config cfg = cli.config_path.empty() ? Config{} : Config::load_file(cli.config_path);
    for (const std::string& kv : cli.sets) {
        auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (cli.seed_given) cfg.set("seed", std::to_string(cli.seed));
    if (!cli.out_dir.empty()) cfg.set("out_dir", cli.out_dir);
    return cfg;
}

DataPaths data_paths(const Config& cfg) {
    DataPaths p;
    p.triples = cfg.get_string("triples", "data/kb_triples.tsv");
    p.aliases = cfg.get_string("aliases", "");
    p.corpus = cfg.get_string("corpus", "data/corpus.jsonl");
    return p;
}

PipelineConfig pipeline_config(const Config& cfg) {
    PipelineConfig p;
    p.k = cfg.get_int("k", p.k);
    p.max_seq_len = cfg.get_int("max_seq_len", p.max_seq_len);
    p.num_negatives = cfg.get_int("num_negatives", p.num_negatives);
    p.mlm_rate = cfg.get_double("mlm_rate", p.mlm_rate);
    p.with_pseudo = cfg.get_bool("with_pseudo", p.with_pseudo);
    p.with_mask_matrix = cfg.get_bool("with_mask_matrix", p.with_mask_matrix);
    p.enable_pri = cfg.get_bool("enable_pri", p.enable_pri);
    p.enable_mpm = cfg.get_bool("enable_mpm", p.enable_mpm);
    return p;
}

TrainerConfig trainer_config(const Config& cfg) {
    TrainerConfig t;
    t.model.hidden = cfg.get_int("hidden", t.model.hidden);
    t.model.layers = cfg.get_int("layers", t.model.layers);
    t.model.heads = cfg.get_int("heads", t.model.heads);
    t.model.ffn_mult = cfg.get_int("ffn_mult", t.model.ffn_mult);
    t.model.dropout = cfg.get_double("dropout", t.model.dropout);
    t.pipeline = pipeline_config(cfg);
    t.optim.lr = cfg.get_double("lr", t.optim.lr);
    t.optim.beta1 = cfg.get_double("beta1", t.optim.beta1);
    t.optim.beta2 = cfg.get_double("beta2", t.optim.beta2);
    t.optim.eps = cfg.get_double("adam_eps", t.optim.eps);
    t.optim.weight_decay = cfg.get_double("weight_decay", t.optim.weight_decay);
    t.optim.clip_norm = cfg.get_double("clip_norm", t.optim.clip_norm);
    t.warmup_frac = cfg.get_double("warmup_frac", t.warmup_frac);
    t.lambda = cfg.get_double("lambda", t.lambda);
    t.mu = cfg.get_double("mu", t.mu);
    t.batch_size = cfg.get_int("batch_size", t.batch_size);
    t.epochs = cfg.get_int("epochs", t.epochs);
    t.stop_after_epochs = cfg.get_int("stop_after_epochs", t.stop_after_epochs);
    t.seed = static_cast<std::uint64_t>(cfg.get_int("seed", static_cast<int>(t.seed)));
    t.holdout_frac = cfg.get_double("holdout_frac", t.holdout_frac);
    t.out_dir = cfg.get_string("out_dir", "out");
    return t;
}

const char* kind_name(SubStructureKind k) {
    switch (k) {
        case SubStructureKind::OneHopOneChain: return "1h1c";
        case SubStructureKind::TwoHopOneChain: return "2h1c";
        case SubStructureKind::TwoHopTwoChain: return "2h2c";
    }
    return "?";
}

std::ofstream open_out(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir + "/" + name, std::ios::trunc);
    if (!out) throw DataError("cannot write " + dir + "/" + name);
    return out;
}

int cmd_build_kb(const Config& cfg) {
    DataPaths paths = data_paths(cfg);
    KnowledgeGraph kg = KnowledgeGraph::load_triples(paths.triples);
    MentionLexicon lex = paths.aliases.empty() ? MentionLexicon::build(kg)
                                               : MentionLexicon::build(kg, paths.aliases);
    std::cout << "entities=" << kg.entity_count() << " relations=" << kg.relation_count()
              << " triples=" << kg.triple_count() << " aliases=" << lex.size() << "\n";
    return 0;
}

int cmd_link(const Config& cfg) {
    DataPaths paths = data_paths(cfg);
    KnowledgeGraph kg = KnowledgeGraph::load_triples(paths.triples);
    MentionLexicon lex = paths.aliases.empty() ? MentionLexicon::build(kg)
                                               : MentionLexicon::build(kg, paths.aliases);
    auto records = load_corpus(paths.corpus);
    std::ofstream out = open_out(cfg.get_string("out_dir", "out"), "links.jsonl");
    std::size_t total = 0;
    for (const auto& rec : records) {
        auto toks = tokenize(rec.text);
        json spans = json::array();
        for (const MentionSpan& sp : link_mentions(toks, lex)) {
            spans.push_back({{"start", sp.start},
                             {"end", sp.end},
                             {"entity", kg.entity_name(sp.entity)}});
            ++total;
        }
        out << json{{"text", rec.text}, {"topic", rec.topic}, {"mentions", spans}}.dump() << "\n";
    }
    std::cout << "linked " << total << " mentions over " << records.size() << " sentences\n";
    return 0;
}

int cmd_build_subgraphs(const Config& cfg, int k_flag) {
    Config local = cfg;
    if (k_flag > 0) local.set("k", std::to_string(k_flag));
    PipelineConfig pcfg = pipeline_config(local);
    pcfg.validate();
    DataPaths paths = data_paths(local);
    KnowledgeGraph kg = KnowledgeGraph::load_triples(paths.triples);
    MentionLexicon lex = paths.aliases.empty() ? MentionLexicon::build(kg)
                                               : MentionLexicon::build(kg, paths.aliases);
    auto records = load_corpus(paths.corpus);

    std::ofstream out = open_out(local.get_string("out_dir", "out"), "subgraphs.jsonl");
    for (const auto& rec : records) {
        auto toks = tokenize(rec.text);
        EntityId topic = kg.find_entity(rec.topic);
        if (topic == kNoEntity) throw DataError("unknown topic entity '" + rec.topic + "'");
        std::unordered_set<EntityId> mentions;
        for (const auto& sp : link_mentions(toks, lex)) mentions.insert(sp.entity);
        ContextSubgraph sg = prune(build_raw_subgraph(kg, topic, pcfg.k), topic, mentions);

        json paths_j = json::array();
        for (const RelationPath& p : sg.paths) paths_j.push_back(path_to_string(kg, p));
        json subs = json::array();
        for (const SubStructure& s : enumerate_substructures(sg, mentions)) {
            json sp = json::array();
            for (const RelationPath& p : s.paths) sp.push_back(path_to_string(kg, p));
            subs.push_back({{"kind", kind_name(s.kind)}, {"paths", sp}});
        }
        out << json{{"topic", rec.topic}, {"retained_paths", paths_j}, {"substructures", subs}}
                   .dump()
            << "\n";
    }
    std::cout << "wrote sub-graphs for " << records.size() << " sentences\n";
    return 0;
}

int cmd_gen_prompts(const Config& cfg) {
    PipelineConfig pcfg = pipeline_config(cfg);
    DataBundle bundle = load_bundle(data_paths(cfg), pcfg);
    std::ofstream out = open_out(cfg.get_string("out_dir", "out"), "prompts.jsonl");
    for (std::size_t i = 0; i < bundle.prepared.size(); ++i) {
        for (const KnowledgePrompt& p : bundle.prepared[i].prompts) {
            json spans = json::array();
            for (const EntitySpan& sp : p.entity_spans)
                spans.push_back({{"start", sp.start},
                                 {"end", sp.end},
                                 {"entity", bundle.kg.entity_name(sp.entity)}});
            json rec{{"sentence_id", i},
                     {"prompt_tokens", p.tokens},
                     {"entity_spans", spans},
                     {"label", "unlabeled"}};
            if (p.masked_entity) rec["masked_entity"] = bundle.kg.entity_name(*p.masked_entity);
            out << rec.dump() << "\n";
        }
    }
    std::cout << "prompts_per_sentence=" << bundle.prompts_per_sentence << "\n";
    return 0;
}

int cmd_assemble(const Config& cfg) {
    PipelineConfig pcfg = pipeline_config(cfg);
    DataBundle bundle = load_bundle(data_paths(cfg), pcfg);
    std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 17));
    std::string dir = cfg.get_string("out_dir", "out");
    std::ofstream out = open_out(dir, "shard.jsonl");
    bundle.vocab.save(dir + "/vocab.tsv");

    for (std::size_t i = 0; i < bundle.prepared.size(); ++i) {
        Rng rng(mix_seed(seed, 0, static_cast<std::uint64_t>(i)));
        ExampleSupervision ex = build_example(bundle.prepared[i], bundle.kg, bundle.vocab, pcfg,
                                              static_cast<int>(i % 2), rng);
        json spans = json::array();
        for (const PromptSpan& sp : ex.seq.prompt_spans)
            spans.push_back({sp.begin, sp.end, sp.trig_open, sp.trig_close});
        // The additive mask holds only 0 and -inf; serialize it as 0/1 rows.
        json blocked = json::array();
        for (const auto& row : ex.seq.mask) {
            json r = json::array();
            for (double v : row) r.push_back(v == 0.0 ? 0 : 1);
            blocked.push_back(r);
        }
        out << json{{"sentence_id", i},
                    {"token_ids", ex.seq.token_ids},
                    {"position_ids", ex.seq.position_ids},
                    {"segment_ids", ex.seq.segment_ids},
                    {"prompt_index", ex.seq.prompt_index},
                    {"mask_blocked", blocked},
                    {"prompt_spans", spans},
                    {"mlm_labels", ex.seq.mlm_labels},
                    {"context_len", ex.seq.context_len},
                    {"mlm_applied", ex.seq.mlm_applied},
                    {"mlm_skipped", ex.seq.mlm_skipped}}
                   .dump()
            << "\n";
    }
    std::cout << "assembled " << bundle.prepared.size() << " sequences (vocab "
              << bundle.vocab.size() << ")\n";
    return 0;
}

int cmd_pretrain(const Config& cfg, const std::string& resume) {
    TrainerConfig tcfg = trainer_config(cfg);
    DataBundle bundle = load_bundle(data_paths(cfg), tcfg.pipeline);
    TrainResult res = train(tcfg, bundle, resume);
    const EpochStats& last = res.epochs.empty() ? EpochStats{} : res.epochs.back();
    std::cout << "epochs=" << res.epochs.size() << " final_total=" << last.total
              << " holdout_mpm_acc=" << last.holdout_mpm_acc << " (chance=" << res.mpm_chance
              << ")\ncheckpoint=" << res.final_checkpoint << "\n";
    return 0;
}

int cmd_probe(const Config& cfg, const std::string& model_path) {
    PipelineConfig pcfg = pipeline_config(cfg);
    DataBundle bundle = load_bundle(data_paths(cfg), pcfg);
    auto cases = load_probe_cases(cfg.get_string("probe_cases", "data/probe_cases.jsonl"));
    Checkpoint ck = load_checkpoint(model_path);
    ProbeResult res = run_probe(ck.params, bundle.vocab, cases);

    json groups;
    for (const auto& [g, p1] : res.group_p1) {
        std::cout << g << " P@1=" << p1 << " (n=" << res.group_n.at(g) << ")\n";
        groups[g] = {{"p1", p1}, {"n", res.group_n.at(g)}};
    }
    std::cout << "overall P@1=" << res.overall << " (n=" << res.total << ")\n";
    std::ofstream out = open_out(cfg.get_string("out_dir", "out"), "probe.json");
    out << json{{"overall", res.overall}, {"total", res.total}, {"groups", groups}}.dump(2)
        << "\n";
    return 0;
}

int cmd_gradcheck(const Config& cfg, double eps, double tol, int per_tensor) {
    PipelineConfig pcfg = pipeline_config(cfg);
    DataBundle bundle = load_bundle(data_paths(cfg), pcfg);

    std::size_t pick = bundle.prepared.size();
    for (std::size_t i = 0; i < bundle.prepared.size(); ++i)
        if (bundle.prepared[i].prompts.size() >= 2) {
            pick = i;
            break;
        }
    if (pick == bundle.prepared.size()) throw DataError("gradcheck: no sentence with 2+ prompts");

    ModelConfig mcfg;
    mcfg.hidden = cfg.get_int("hidden", 8);
    mcfg.layers = cfg.get_int("layers", 2);
    mcfg.heads = cfg.get_int("heads", 2);
    mcfg.ffn_mult = cfg.get_int("ffn_mult", 2);
    mcfg.max_position = pcfg.max_seq_len;
    mcfg.vocab_size = static_cast<int>(bundle.vocab.size());
    mcfg.validate();

    std::uint64_t seed = static_cast<std::uint64_t>(cfg.get_int("seed", 17));
    Rng init_rng(mix_seed(seed, 0x696e6974));
    ModelParams params = ModelParams::init(mcfg, init_rng);

    Rng ex_rng(mix_seed(seed, 1, static_cast<std::uint64_t>(pick)));
    std::vector<ExampleSupervision> batch;
    batch.push_back(build_example(bundle.prepared[pick], bundle.kg, bundle.vocab, pcfg, 0, ex_rng));

    double lambda = cfg.get_double("lambda", 0.5), mu = cfg.get_double("mu", 0.5);
    Gradients analytic;
    total_loss(params, batch, bundle.verb, bundle.vocab, lambda, mu, &analytic);
    auto loss_fn = [&]() {
        return total_loss(params, batch, bundle.verb, bundle.vocab, lambda, mu).total;
    };
    Rng check_rng(mix_seed(seed, 0x6763686bULL));
    FiniteDiffReport rep = finite_difference_check(params, loss_fn, analytic, eps, tol,
                                                   static_cast<std::size_t>(per_tensor), check_rng);
    std::cout << "coords=" << rep.coords_checked << " max_rel_err=" << rep.max_rel_err
              << " worst=" << rep.worst_tensor << "[" << rep.worst_index << "]"
              << " tol=" << rep.tolerance << " -> " << (rep.pass ? "PASS" : "FAIL") << "\n";
    return rep.pass ? 0 : 3;
}

int cmd_report(const Config& cfg) {
    TrainerConfig tcfg = trainer_config(cfg);
    ReportOutput out = run_report(tcfg, data_paths(cfg),
                                  cfg.get_string("probe_cases", "data/probe_cases.jsonl"));
    for (const ReportVariant& v : out.variants)
        std::cout << v.name << ": holdout_mpm=" << v.holdout_mpm_acc << " probe_p1=" << v.probe_p1
                  << "\n";
    std::cout << "report=" << out.md_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"knowledge-prompt pre-training pipeline"};
    app.require_subcommand(1);

    Cli cli;
    app.add_option("--config", cli.config_path, "key=value configuration file");
    app.add_option("--set", cli.sets, "override a config entry (key=value)")->take_all();
    app.add_option("--seed", cli.seed, "override the run seed")
        ->each([&](const std::string&) { cli.seed_given = true; });
    app.add_option("--out-dir", cli.out_dir, "override the output directory");

    app.add_subcommand("build-kb", "load and summarize the knowledge base");
    app.add_subcommand("link", "dictionary-link corpus mentions");
    auto* sub_sg = app.add_subcommand("build-subgraphs", "dump pruned contextual sub-graphs");
    int k_flag = 0;
    sub_sg->add_option("--k", k_flag, "hop limit")->check(CLI::Range(1, 4));
    app.add_subcommand("gen-prompts", "dump rendered knowledge prompts");
    app.add_subcommand("assemble", "dump assembled training sequences and the vocabulary");
    auto* sub_train = app.add_subcommand("pretrain", "run the pre-training loop");
    std::string resume;
    sub_train->add_option("--resume", resume, "checkpoint to resume from");
    auto* sub_probe = app.add_subcommand("probe", "knowledge-probing evaluation");
    std::string model_path;
    sub_probe->add_option("--model", model_path, "checkpoint to evaluate")->required();
    auto* sub_gc = app.add_subcommand("gradcheck", "finite-difference gradient check");
    double gc_eps = 1e-4, gc_tol = 1e-3;
    int gc_per_tensor = 6;
    sub_gc->add_option("--eps", gc_eps, "finite-difference step");
    sub_gc->add_option("--tol", gc_tol, "max relative error");
    sub_gc->add_option("--per-tensor", gc_per_tensor, "coordinates sampled per tensor");
    app.add_subcommand("report", "train all ablation variants and emit the table");

    try {
        app.parse(argc, argv);
        Config cfg = load_config(cli);
        if (app.got_subcommand("build-kb")) return cmd_build_kb(cfg);
        if (app.got_subcommand("link")) return cmd_link(cfg);
        if (app.got_subcommand("build-subgraphs")) return cmd_build_subgraphs(cfg, k_flag);
        if (app.got_subcommand("gen-prompts")) return cmd_gen_prompts(cfg);
        if (app.got_subcommand("assemble")) return cmd_assemble(cfg);
        if (app.got_subcommand("pretrain")) return cmd_pretrain(cfg, resume);
        if (app.got_subcommand("probe")) return cmd_probe(cfg, model_path);
        if (app.got_subcommand("gradcheck")) return cmd_gradcheck(cfg, gc_eps, gc_tol, gc_per_tensor);
        if (app.got_subcommand("report")) return cmd_report(cfg);
        return 1;
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
