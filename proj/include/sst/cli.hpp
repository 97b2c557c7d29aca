#pragma once

// Command-line front end over the whole laboratory: dataset synthesis, the two
// supervised trainers, chain injection, mining, cold start, the RL stage, the
// evaluation harness, and a run reporter.  Every subcommand reads one key=value
// config, writes its artifacts into an output directory it never reads inputs
// from, and finishes by writing a manifest that hashes everything it consumed
// and produced, so reruns can be compared byte for byte.

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sst/checkpoint.hpp"
#include "sst/config.hpp"
#include "sst/evalharness.hpp"
#include "sst/svgplot.hpp"

namespace sst {
namespace cli {

using Real = double;

// --- run context ------------------------------------------------------------------------

struct RunContext {
    KvConfig cfg;
    uint64_t seed = 0;
    std::filesystem::path out_dir;
    Manifest manifest;
    std::ostream* out = nullptr;

    std::ostream& log() { return *out; }

    // required input file: existence-checked, hashed into the manifest
    std::string in_path(const std::string& key) {
        const std::string& p = cfg.get_string(key);
        expect(std::filesystem::exists(p), Errc::missing_input,
               "key '" + key + "': no such file: " + p);
        manifest_add_input(manifest, p);
        return p;
    }

    // artifact path inside out_dir; bare names only, so no run can reach back
    // into its inputs and mutate them in place
    std::string art_path(const std::string& key, const std::string& fallback) {
        std::string name = cfg.get_string(key, fallback);
        expect(!name.empty() && name.find('/') == std::string::npos &&
                   name.find('\\') == std::string::npos && name != "." && name != "..",
               Errc::config_parse, "key '" + key + "': artifact names must be bare file names");
        return (out_dir / name).string();
    }

    // artifacts are keyed by bare name, so two runs of the same config and
    // seed produce equal digests no matter where their output directories live
    void finish(const std::string& path) {
        manifest.artifact_hashes[std::filesystem::path(path).filename().string()] =
            hex64(hash_file(path));
    }
};

// every subcommand accepts these on top of its own keys
inline void allow(const RunContext& rc, std::set<std::string> keys) {
    keys.insert("seed");
    keys.insert("out_dir");
    rc.cfg.require_known(keys);
}

// --- config plumbing shared across subcommands -------------------------------------------

inline int get_pos_int(const KvConfig& cfg, const std::string& key, int64_t fallback) {
    int64_t v = cfg.get_int(key, fallback);
    expect(v >= 1, Errc::config_parse, "key '" + key + "': must be >= 1");
    return static_cast<int>(v);
}

inline ModelConfig model_cfg_from(const KvConfig& cfg, int vocab_size, uint64_t run_seed) {
    ModelConfig c;
    c.vocab_size = vocab_size;
    c.d_model = get_pos_int(cfg, "d_model", 64);
    c.n_layers = get_pos_int(cfg, "n_layers", 2);
    c.n_heads = get_pos_int(cfg, "n_heads", 4);
    c.d_ff = get_pos_int(cfg, "d_ff", 4 * c.d_model);
    c.max_seq_len = get_pos_int(cfg, "max_seq_len", 512);
    c.rng_seed = cfg.get_u64("model_seed", derive_seed(run_seed, "model_init", 0));
    c.validate();
    return c;
}

inline OptimConfig optim_from(const KvConfig& cfg) {
    OptimConfig oc;
    oc.lr_max = cfg.get_double("lr_max", oc.lr_max);
    oc.lr_min = cfg.get_double("lr_min", oc.lr_min);
    oc.grad_clip = cfg.get_double("grad_clip", oc.grad_clip);
    return oc;
}

inline SampleConfig sample_cfg_from(const KvConfig& cfg, SampleConfig d) {
    d.temperature = cfg.get_double("temperature", d.temperature);
    d.top_p = cfg.get_double("top_p", d.top_p);
    d.max_new_tokens = get_pos_int(cfg, "max_new_tokens", d.max_new_tokens);
    return d;
}

inline ChainGenConfig chain_gen_from(const KvConfig& cfg) {
    ChainGenConfig gc;
    gc.temperature = cfg.get_double("chain_temperature", gc.temperature);
    gc.top_p = cfg.get_double("chain_top_p", gc.top_p);
    gc.max_new_tokens = get_pos_int(cfg, "chain_max_new_tokens", gc.max_new_tokens);
    return gc;
}

inline std::vector<uint64_t> seeds_from(const KvConfig& cfg) {
    return cfg.get_u64_list("seeds", {0, 1, 2, 3, 4, 5, 6, 7});
}

inline void check_vocab_model(const Vocab& v, const ModelConfig& cfg, const std::string& what) {
    expect(cfg.vocab_size == v.size(), Errc::version_mismatch,
           what + ": vocabulary has " + std::to_string(v.size()) +
               " tokens but the checkpoint expects " + std::to_string(cfg.vocab_size));
}

// either load the vocabulary named by `vocab`, or build one from the task set
// and save it as an artifact so downstream runs can consume it
inline Vocab resolve_vocab(RunContext& rc, const std::vector<TaskInstance>& tasks,
                           std::string* note) {
    if (rc.cfg.has("vocab")) {
        note->clear();
        return Vocab::load(rc.in_path("vocab"));
    }
    Vocab v = Vocab::build(vocab_corpus(tasks));
    std::string path = rc.art_path("vocab_out", "vocab.txt");
    v.save(path);
    rc.finish(path);
    *note = ", vocab " + std::to_string(v.size()) + " tokens -> " + path;
    return v;
}

// a generator checkpoint may carry low-rank adapters; carry both together
struct GeneratorBundle {
    Model<Real> model;
    LoraAdapters<Real> lora;
    bool has_lora = false;

    const LoraAdapters<Real>* adapters() const { return has_lora ? &lora : nullptr; }
};

inline GeneratorBundle load_generator(const std::string& path) {
    GeneratorBundle g{read_model<Real>(path), LoraAdapters<Real>{}, false};
    if (checkpoint_has_adapters<Real>(path)) {
        load_checkpoint(g.model, path, &g.lora);
        g.has_lora = true;
    }
    return g;
}

inline ColdStartConfig cold_cfg_from(const RunContext& rc) {
    ColdStartConfig cc;
    cc.corruption_rate = rc.cfg.get_double("corruption_rate", cc.corruption_rate);
    cc.fidelity_threshold = rc.cfg.get_double("fidelity_threshold", cc.fidelity_threshold);
    cc.chain_gen = chain_gen_from(rc.cfg);
    cc.rng_seed = derive_seed(rc.seed, "cold_start", 0);
    return cc;
}

inline std::string cold_stats_line(const std::string& tag, const ColdStartStats& s) {
    std::ostringstream os;
    os << tag << ": kept " << s.kept << "/" << s.total << " records (dropped " << s.format_failed
       << " format, " << s.low_fidelity << " fidelity, " << s.wrong_answer << " answer)";
    return os.str();
}

// --- gen-data ----------------------------------------------------------------------------

inline constexpr const char* kDefaultMixture =
    "chained_arithmetic:1:60,chained_arithmetic:2:60,linear_system:2:60,"
    "linear_system:3:60,geometry_steps:3:30,geometry_steps:4:30";

// "family:level:count" entries, comma separated
inline std::vector<MixtureEntry> parse_mixture(const std::string& text) {
    std::vector<MixtureEntry> out;
    for (const auto& part : split(text, ',')) {
        std::string entry(trim(part));
        if (entry.empty()) continue;
        auto fields = split(entry, ':');
        expect(fields.size() == 3, Errc::config_parse,
               "mixture entry '" + entry + "': want family:level:count");
        MixtureEntry e;
        e.family = family_from_name(trim(fields[0]));
        int64_t level = detail::parse_int_value("mixture level", std::string(trim(fields[1])));
        int64_t count = detail::parse_int_value("mixture count", std::string(trim(fields[2])));
        expect(count >= 1, Errc::config_parse, "mixture entry '" + entry + "': count must be >= 1");
        e.level = static_cast<int>(level);
        e.count = static_cast<size_t>(count);
        out.push_back(e);
    }
    expect(!out.empty(), Errc::config_parse, "mixture: no entries");
    return out;
}

inline void cmd_gen_data(RunContext& rc) {
    allow(rc, {"mixture", "variants_of", "variants_per_parent", "degrade", "out_name"});
    std::string out = rc.art_path("out_name", "tasks.jsonl");

    if (rc.cfg.has("variants_of")) {
        expect(!rc.cfg.has("mixture"), Errc::config_parse,
               "gen-data: 'mixture' and 'variants_of' are mutually exclusive");
        std::vector<TaskInstance> parents = load_dataset(rc.in_path("variants_of"));
        expect(!parents.empty(), Errc::empty_dataset, "gen-data: parent dataset is empty");
        size_t per = static_cast<size_t>(get_pos_int(rc.cfg, "variants_per_parent", 3));
        bool degrade = rc.cfg.get_bool("degrade", true);
        std::vector<TaskInstance> tasks;
        size_t idx = 0;
        for (const auto& p : parents)
            for (size_t k = 0; k < per; ++k, ++idx)
                tasks.push_back(generate_variant(p, degrade, derive_seed(rc.seed, "variant", idx)));
        write_dataset(tasks, out);
        rc.finish(out);
        rc.log() << "gen-data: wrote " << tasks.size() << (degrade ? " degraded" : "")
                 << " variants of " << parents.size() << " parents to " << out << "\n";
        return;
    }

    std::vector<MixtureEntry> mixture =
        parse_mixture(rc.cfg.get_string("mixture", kDefaultMixture));
    size_t n = emit_dataset(mixture, rc.seed, out);
    rc.finish(out);
    rc.log() << "gen-data: wrote " << n << " tasks to " << out << "\n";
}

// --- annotate ----------------------------------------------------------------------------

inline void cmd_annotate(RunContext& rc) {
    allow(rc, {"data", "layout", "out_name"});
    std::vector<TaskInstance> tasks = load_dataset(rc.in_path("data"));
    expect(!tasks.empty(), Errc::empty_dataset, "annotate: dataset is empty");

    std::string layout_name = rc.cfg.get_string("layout", "chain_trailing");
    TraceLayout layout;
    if (layout_name == "chain_trailing") layout = TraceLayout::chain_trailing;
    else if (layout_name == "chain_leading") layout = TraceLayout::chain_leading;
    else
        fail(Errc::config_parse,
             "key 'layout': want chain_trailing or chain_leading, got '" + layout_name + "'");

    std::string out = rc.art_path("out_name", "annotated.jsonl");
    std::ofstream f(out, std::ios::binary);
    expect(f.good(), Errc::io_failure, "annotate: cannot open " + out);
    for (const auto& t : tasks) {
        nlohmann::ordered_json j;
        j["id"] = t.id;
        j["layout"] = layout_name;
        j["text"] = compose_trace(t.gold_chain, t.gold_steps, t.gold_answer, layout).text;
        f << j.dump() << "\n";
    }
    expect(f.good(), Errc::io_failure, "annotate: write failed for " + out);
    f.close();
    rc.finish(out);
    rc.log() << "annotate: wrote " << tasks.size() << " " << layout_name << " traces to " << out
             << "\n";
}

// --- train-sft ---------------------------------------------------------------------------

inline void cmd_train_sft(RunContext& rc) {
    allow(rc, {"data", "vocab", "vocab_out", "init_from", "d_model", "n_layers", "n_heads",
               "d_ff", "max_seq_len", "model_seed", "epochs", "batch_size", "w_initial",
               "weight_delimiters", "ablation", "p_solve", "p_injected", "p_plan", "lr_max",
               "lr_min", "grad_clip", "log_every", "out_name", "loss_name"});
    std::vector<TaskInstance> tasks = load_dataset(rc.in_path("data"));
    std::string vocab_note;
    Vocab v = resolve_vocab(rc, tasks, &vocab_note);

    std::optional<Model<Real>> m;
    if (rc.cfg.has("init_from")) {
        m.emplace(read_model<Real>(rc.in_path("init_from")));
        check_vocab_model(v, m->cfg, "train-sft");
    } else {
        m.emplace(model_cfg_from(rc.cfg, v.size(), rc.seed));
    }

    DataMixConfig mix;
    mix.p_solve = rc.cfg.get_double("p_solve", mix.p_solve);
    mix.p_injected = rc.cfg.get_double("p_injected", mix.p_injected);
    mix.p_plan = rc.cfg.get_double("p_plan", mix.p_plan);
    SftAblation ab = ablation_from_name(rc.cfg.get_string("ablation", "full"));
    SftDataset ds =
        build_sft_dataset(v, tasks, mix, m->cfg.max_seq_len, ab, derive_seed(rc.seed, "sft_data", 0));

    SftRunConfig run;
    run.epochs = get_pos_int(rc.cfg, "epochs", 1);
    run.batch_size = static_cast<size_t>(get_pos_int(rc.cfg, "batch_size", 8));
    run.loss_cfg.w_initial = rc.cfg.get_double("w_initial", 3.0);
    run.loss_cfg.weight_delimiters = rc.cfg.get_bool("weight_delimiters", true);
    run.ablation = ab;
    run.optim = optim_from(rc.cfg);
    run.rng_seed = derive_seed(rc.seed, "sft_train", 0);
    run.log_every = get_pos_int(rc.cfg, "log_every", 1);
    SftResult res = train_sft(*m, ds, run);

    std::string ckpt = rc.art_path("out_name", "model-sft.ckpt");
    save_checkpoint(*m, ckpt);
    rc.finish(ckpt);
    std::string losses = rc.art_path("loss_name", "sft-loss.csv");
    write_loss_log(losses, res.log);
    rc.finish(losses);
    rc.log() << "train-sft: " << ds.examples.size() << " examples (" << ds.skipped_too_long
             << " skipped), " << res.steps_run << " steps, final loss " << res.log.back().total
             << vocab_note << "\n";
}

// --- train-generator ----------------------------------------------------------------------

inline void cmd_train_generator(RunContext& rc) {
    allow(rc, {"data", "vocab", "vocab_out", "base_model", "d_model", "n_layers", "n_heads",
               "d_ff", "max_seq_len", "model_seed", "lora_rank", "lora_alpha", "epochs",
               "batch_size", "chain_weight", "train_embeddings", "lr_max", "lr_min", "grad_clip",
               "log_every", "out_name", "loss_name"});
    std::vector<TaskInstance> tasks = load_dataset(rc.in_path("data"));
    std::string vocab_note;
    Vocab v = resolve_vocab(rc, tasks, &vocab_note);

    std::optional<Model<Real>> m;
    if (rc.cfg.has("base_model")) {
        m.emplace(read_model<Real>(rc.in_path("base_model")));
        check_vocab_model(v, m->cfg, "train-generator");
    } else {
        m.emplace(model_cfg_from(rc.cfg, v.size(), rc.seed));
    }

    GeneratorTrainConfig gc;
    gc.lora.rank = get_pos_int(rc.cfg, "lora_rank", gc.lora.rank);
    gc.lora.alpha = rc.cfg.get_double("lora_alpha", gc.lora.alpha);
    gc.epochs = get_pos_int(rc.cfg, "epochs", 1);
    gc.batch_size = static_cast<size_t>(get_pos_int(rc.cfg, "batch_size", 8));
    gc.chain_weight = rc.cfg.get_double("chain_weight", 1.0);
    gc.train_embeddings = rc.cfg.get_bool("train_embeddings", true);
    gc.optim = optim_from(rc.cfg);
    gc.rng_seed = derive_seed(rc.seed, "gen_train", 0);
    gc.log_every = get_pos_int(rc.cfg, "log_every", 1);

    LoraAdapters<Real> lora(m->cfg, gc.lora, derive_seed(rc.seed, "lora_init", 0));
    SftDataset ds = build_generator_dataset(v, tasks, m->cfg.max_seq_len);
    SftResult res = train_chain_generator(*m, lora, ds, gc);

    std::string ckpt = rc.art_path("out_name", "generator.ckpt");
    save_checkpoint(*m, ckpt, &lora);
    rc.finish(ckpt);
    std::string losses = rc.art_path("loss_name", "generator-loss.csv");
    write_loss_log(losses, res.log);
    rc.finish(losses);
    rc.log() << "train-generator: rank-" << gc.lora.rank << " adapters, " << res.steps_run
             << " steps, final loss " << res.log.back().total << vocab_note << "\n";
}

// --- inject-eval --------------------------------------------------------------------------

inline void cmd_inject_eval(RunContext& rc) {
    allow(rc, {"solver", "generator", "data", "vocab", "benchmark", "seeds", "temperature",
               "top_p", "max_new_tokens", "chain_temperature", "chain_top_p",
               "chain_max_new_tokens", "workers", "plain_name", "injected_name", "records_name",
               "summary_name"});
    std::vector<TaskInstance> problems = load_dataset(rc.in_path("data"));
    Vocab v = Vocab::load(rc.in_path("vocab"));
    Model<Real> solver = read_model<Real>(rc.in_path("solver"));
    check_vocab_model(v, solver.cfg, "inject-eval solver");
    GeneratorBundle gen = load_generator(rc.in_path("generator"));
    check_vocab_model(v, gen.model.cfg, "inject-eval generator");

    std::string bench = rc.cfg.get_string("benchmark", "benchmark");
    std::vector<uint64_t> seeds = seeds_from(rc.cfg);
    SampleConfig sc = sample_cfg_from(rc.cfg, {0.6, 0.95, 256, kEosId, 0});
    ChainGenConfig gc = chain_gen_from(rc.cfg);
    int workers = get_pos_int(rc.cfg, "workers", 1);

    PairedEval<Real> pe =
        evaluate_paired(solver, gen.model, gen.adapters(), v, bench, problems, seeds, sc, gc,
                        workers);

    std::string plain_csv = rc.art_path("plain_name", "eval-plain.csv");
    write_eval_csv(plain_csv, pe.plain);
    rc.finish(plain_csv);
    std::string injected_csv = rc.art_path("injected_name", "eval-injected.csv");
    write_eval_csv(injected_csv, pe.injected);
    rc.finish(injected_csv);
    std::string records_csv = rc.art_path("records_name", "injection-records.csv");
    write_injection_report(records_csv, pe.records);
    rc.finish(records_csv);

    EvalReport plain_row = pe.plain, injected_row = pe.injected;
    plain_row.benchmark += "-plain";
    injected_row.benchmark += "-injected";
    std::string summary_csv = rc.art_path("summary_name", "eval-summary.csv");
    write_eval_summary(summary_csv, {plain_row, injected_row});
    rc.finish(summary_csv);

    rc.log() << "inject-eval: " << bench << " plain " << pe.plain.mean << " acc / "
             << pe.plain.mean_tokens << " tok, injected " << pe.injected.mean << " acc / "
             << pe.injected.mean_tokens << " tok, token delta " << pe.delta_pct << "%\n";
}

// --- mine-hard ----------------------------------------------------------------------------

inline void cmd_mine_hard(RunContext& rc) {
    allow(rc, {"solver", "data", "vocab", "k_samples", "threshold", "temperature", "top_p",
               "max_new_tokens", "mining_name", "selected_name"});
    std::vector<TaskInstance> pool = load_dataset(rc.in_path("data"));
    Vocab v = Vocab::load(rc.in_path("vocab"));
    Model<Real> solver = read_model<Real>(rc.in_path("solver"));
    check_vocab_model(v, solver.cfg, "mine-hard");

    MiningConfig mc;
    mc.k_samples = get_pos_int(rc.cfg, "k_samples", mc.k_samples);
    mc.threshold = rc.cfg.get_double("threshold", mc.threshold);
    mc.sample_cfg = sample_cfg_from(rc.cfg, mc.sample_cfg);
    mc.rng_seed = derive_seed(rc.seed, "mining", 0);

    std::vector<MinedProblem> mined = mine_hard(solver, v, pool, mc);
    std::string report = rc.art_path("mining_name", "mining.csv");
    write_mining_report(report, mined);
    rc.finish(report);

    std::vector<TaskInstance> selected = selected_tasks(mined);
    std::string sel = rc.art_path("selected_name", "selected.jsonl");
    write_dataset(selected, sel);
    rc.finish(sel);
    rc.log() << "mine-hard: selected " << selected.size() << " of " << mined.size()
             << " problems (accuracy <= " << mc.threshold << ")\n";
}

// --- cold-start ---------------------------------------------------------------------------

inline void cmd_cold_start(RunContext& rc) {
    allow(rc, {"generator", "data", "vocab", "corruption_rate", "fidelity_threshold",
               "chain_temperature", "chain_top_p", "chain_max_new_tokens", "out_name"});
    std::vector<TaskInstance> mined = load_dataset(rc.in_path("data"));
    Vocab v = Vocab::load(rc.in_path("vocab"));
    GeneratorBundle gen = load_generator(rc.in_path("generator"));
    check_vocab_model(v, gen.model.cfg, "cold-start");

    ColdStartConfig cc = cold_cfg_from(rc);
    ColdStartResult res = build_cold_start(gen.model, gen.adapters(), v, mined, cc);
    rc.log() << cold_stats_line("cold-start", res.stats) << "\n";
    expect(!res.records.empty(), Errc::empty_pool, "cold-start: nothing retained");

    std::string out = rc.art_path("out_name", "cold.jsonl");
    write_cold_start_jsonl(out, res.records);
    rc.finish(out);
}

// --- train-grpo ---------------------------------------------------------------------------

inline void cmd_train_grpo(RunContext& rc) {
    allow(rc, {"solver", "generator", "data", "vocab", "corruption_rate", "fidelity_threshold",
               "chain_temperature", "chain_top_p", "chain_max_new_tokens", "cold_epochs",
               "cold_batch_size", "w_initial", "weight_delimiters", "cold_lr_max", "cold_lr_min",
               "group_size", "epsilon", "kl_coeff", "chain_weight", "prompts_per_step", "n_steps",
               "rollout_temperature", "rollout_top_p", "rollout_max_new_tokens", "lr_max",
               "lr_min", "grad_clip", "enabled", "out_name", "curve_name", "cold_name"});
    std::vector<TaskInstance> mined = load_dataset(rc.in_path("data"));
    Vocab v = Vocab::load(rc.in_path("vocab"));
    Model<Real> solver = read_model<Real>(rc.in_path("solver"));
    check_vocab_model(v, solver.cfg, "train-grpo solver");
    GeneratorBundle gen = load_generator(rc.in_path("generator"));
    check_vocab_model(v, gen.model.cfg, "train-grpo generator");

    ColdStartConfig cc = cold_cfg_from(rc);

    SftRunConfig cold;
    cold.epochs = get_pos_int(rc.cfg, "cold_epochs", 2);
    cold.batch_size = static_cast<size_t>(get_pos_int(rc.cfg, "cold_batch_size", 8));
    cold.loss_cfg.w_initial = rc.cfg.get_double("w_initial", 3.0);
    cold.loss_cfg.weight_delimiters = rc.cfg.get_bool("weight_delimiters", true);
    cold.optim = optim_from(rc.cfg);
    cold.optim.lr_max = rc.cfg.get_double("cold_lr_max", cold.optim.lr_max);
    cold.optim.lr_min = rc.cfg.get_double("cold_lr_min", cold.optim.lr_min);
    cold.rng_seed = derive_seed(rc.seed, "cold_sft", 0);

    GrpoConfig g;
    g.group_size = get_pos_int(rc.cfg, "group_size", g.group_size);
    g.epsilon = rc.cfg.get_double("epsilon", g.epsilon);
    g.kl_coeff = rc.cfg.get_double("kl_coeff", g.kl_coeff);
    g.chain_weight = rc.cfg.get_double("chain_weight", g.chain_weight);
    g.prompts_per_step =
        static_cast<size_t>(get_pos_int(rc.cfg, "prompts_per_step", g.prompts_per_step));
    int64_t n_steps = rc.cfg.get_int("n_steps", g.n_steps);
    expect(n_steps >= 0, Errc::config_parse, "key 'n_steps': must be nonnegative");
    g.n_steps = static_cast<int>(n_steps);
    g.rollout.temperature = rc.cfg.get_double("rollout_temperature", g.rollout.temperature);
    g.rollout.top_p = rc.cfg.get_double("rollout_top_p", g.rollout.top_p);
    g.rollout.max_new_tokens =
        get_pos_int(rc.cfg, "rollout_max_new_tokens", g.rollout.max_new_tokens);
    g.optim = optim_from(rc.cfg);
    g.rng_seed = derive_seed(rc.seed, "grpo", 0);
    g.enabled = rc.cfg.get_bool("enabled", true);

    Stage3Result res = run_stage3(solver, gen.model, gen.adapters(), v, mined, cc, cold, g);

    std::string ckpt = rc.art_path("out_name", "model-grpo.ckpt");
    save_checkpoint(solver, ckpt);
    rc.finish(ckpt);
    std::string cold_jsonl = rc.art_path("cold_name", "cold.jsonl");
    write_cold_start_jsonl(cold_jsonl, res.cold_records);
    rc.finish(cold_jsonl);
    std::string curve = rc.art_path("curve_name", "grpo-curve.csv");
    write_grpo_curve(curve, res.curve);
    rc.finish(curve);

    rc.log() << cold_stats_line("train-grpo", res.cold_stats) << ", cold steps "
             << res.cold_log.steps_run;
    if (res.curve.empty()) rc.log() << ", policy phase disabled\n";
    else
        rc.log() << ", " << res.curve.size() << " policy steps, final mean reward "
                 << res.curve.back().mean_reward << "\n";
}

// --- evaluate -----------------------------------------------------------------------------

inline void cmd_evaluate(RunContext& rc) {
    allow(rc, {"model", "data", "vocab", "benchmark", "seeds", "temperature", "top_p",
               "max_new_tokens", "workers", "out_name", "summary_name"});
    std::vector<TaskInstance> problems = load_dataset(rc.in_path("data"));
    Vocab v = Vocab::load(rc.in_path("vocab"));
    std::string model_path = rc.in_path("model");
    Model<Real> m = read_model<Real>(model_path);
    check_vocab_model(v, m.cfg, "evaluate");
    LoraAdapters<Real> lora;
    const LoraAdapters<Real>* lp = nullptr;
    if (checkpoint_has_adapters<Real>(model_path)) {
        load_checkpoint(m, model_path, &lora);
        lp = &lora;
    }

    std::string bench = rc.cfg.get_string(
        "benchmark", std::filesystem::path(rc.cfg.get_string("data")).stem().string());
    std::vector<uint64_t> seeds = seeds_from(rc.cfg);
    SampleConfig sc = sample_cfg_from(rc.cfg, {0.6, 0.95, 256, kEosId, 0});
    int workers = get_pos_int(rc.cfg, "workers", 1);

    EvalReport rep = evaluate(m, v, bench, problems, seeds, sc, workers, lp);

    std::string rows_csv = rc.art_path("out_name", "eval.csv");
    write_eval_csv(rows_csv, rep);
    rc.finish(rows_csv);
    std::string summary_csv = rc.art_path("summary_name", "eval-summary.csv");
    write_eval_summary(summary_csv, {rep});
    rc.finish(summary_csv);
    rc.log() << "evaluate: " << bench << " pass@1 " << rep.mean << " +/- " << rep.std_dev
             << " over " << seeds.size() << " seeds, mean tokens " << rep.mean_tokens << "\n";
}

// --- sweep-scaling ------------------------------------------------------------------------

inline void cmd_sweep_scaling(RunContext& rc) {
    allow(rc, {"base_model", "pool_data", "hard_data", "vocab", "sizes", "seeds", "pool_mode",
               "epochs", "batch_size", "w_initial", "weight_delimiters", "lr_max", "lr_min",
               "grad_clip", "temperature", "top_p", "max_new_tokens", "workers", "out_name",
               "svg_name"});
    Vocab v = Vocab::load(rc.in_path("vocab"));
    Model<Real> base = read_model<Real>(rc.in_path("base_model"));
    check_vocab_model(v, base.cfg, "sweep-scaling");
    std::vector<TaskInstance> pool_tasks = load_dataset(rc.in_path("pool_data"));
    std::vector<TaskInstance> hard = load_dataset(rc.in_path("hard_data"));

    std::string mode = rc.cfg.get_string("pool_mode", "solve");
    DataMixConfig mix;
    if (mode == "solve") mix = {1.0, 0.0, 0.0};
    else if (mode == "plan") mix = {0.0, 0.0, 1.0};
    else if (mode != "mixed")
        fail(Errc::config_parse, "key 'pool_mode': want solve, plan, or mixed, got '" + mode + "'");
    SftDataset pool = build_sft_dataset(v, pool_tasks, mix, base.cfg.max_seq_len,
                                        SftAblation::full, derive_seed(rc.seed, "sweep_pool", 0));

    SweepConfig sc;
    for (uint64_t s : rc.cfg.get_u64_list("sizes", {0, 1000, 5000, 20000}))
        sc.sizes.push_back(static_cast<size_t>(s));
    sc.seeds = rc.cfg.get_u64_list("seeds", {0, 1, 2});
    sc.train.epochs = get_pos_int(rc.cfg, "epochs", 1);
    sc.train.batch_size = static_cast<size_t>(get_pos_int(rc.cfg, "batch_size", 16));
    sc.train.loss_cfg.w_initial = rc.cfg.get_double("w_initial", 3.0);
    sc.train.loss_cfg.weight_delimiters = rc.cfg.get_bool("weight_delimiters", true);
    sc.train.optim = optim_from(rc.cfg);
    sc.eval_sampling = sample_cfg_from(rc.cfg, sc.eval_sampling);
    sc.workers = get_pos_int(rc.cfg, "workers", 1);

    SweepResult res = scaling_sweep(base, v, pool, hard, sc);

    std::string csv = rc.art_path("out_name", "sweep.csv");
    write_sweep_csv(csv, res);
    rc.finish(csv);

    PlotSeries series;
    series.name = "mean pass@1";
    for (const auto& [size, acc] : res.mean_curve)
        series.points.emplace_back(static_cast<double>(size), acc);
    std::string svg = rc.art_path("svg_name", "sweep.svg");
    write_line_svg(svg, "held-out accuracy vs fine-tuning examples", "training examples",
                   "pass@1", {series});
    rc.finish(svg);

    rc.log() << "sweep-scaling:";
    for (const auto& [size, acc] : res.mean_curve) rc.log() << " " << size << "->" << acc;
    rc.log() << " (" << res.rows.size() << " arms)\n";
}

// --- report -------------------------------------------------------------------------------

namespace report_detail {

inline bool inline_worthy(const std::string& name) {
    return name.find("summary") != std::string::npos || name.find("curve") != std::string::npos ||
           name.find("sweep") != std::string::npos || name.find("mining") != std::string::npos;
}

} // namespace report_detail

inline void cmd_report(RunContext& rc) {
    allow(rc, {"out_name"});
    std::string out = rc.art_path("out_name", "report.txt");
    std::string own_manifest = "report.manifest.json";

    std::vector<std::string> manifests, csvs;
    for (const auto& e : std::filesystem::directory_iterator(rc.out_dir)) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (name == own_manifest || e.path() == std::filesystem::path(out)) continue;
        if (name.size() > 14 && name.ends_with(".manifest.json")) manifests.push_back(name);
        else if (name.ends_with(".csv")) csvs.push_back(name);
    }
    std::sort(manifests.begin(), manifests.end());
    std::sort(csvs.begin(), csvs.end());
    expect(!manifests.empty(), Errc::missing_input,
           "report: no run manifests in " + rc.out_dir.string());

    std::ostringstream body;
    body << "run report\n==========\n";
    for (const auto& name : manifests) {
        std::string path = (rc.out_dir / name).string();
        manifest_add_input(rc.manifest, path);
        Manifest mf = read_manifest(path);
        body << "\n[" << mf.subcommand << "] seed " << mf.seed << ", "
             << mf.input_hashes.size() << " inputs, " << mf.artifact_hashes.size()
             << " artifacts, digest " << manifest_artifact_digest(mf) << "\n";
        for (const auto& [apath, hash] : mf.artifact_hashes)
            body << "  " << apath << "  " << hash << "\n";
    }
    for (const auto& name : csvs) {
        std::string path = (rc.out_dir / name).string();
        manifest_add_input(rc.manifest, path);
        std::ifstream f(path, std::ios::binary);
        expect(f.good(), Errc::io_failure, "report: cannot read " + path);
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        size_t rows = 0;
        for (char c : text)
            if (c == '\n') ++rows;
        if (rows > 0) --rows; // drop the header from the count
        body << "\n== " << name << " (" << rows << " data rows)\n";
        if (report_detail::inline_worthy(name)) body << text;
    }

    std::ofstream f(out, std::ios::binary);
    expect(f.good(), Errc::io_failure, "report: cannot open " + out);
    f << body.str();
    expect(f.good(), Errc::io_failure, "report: write failed for " + out);
    f.close();
    rc.finish(out);
    rc.log() << "report: " << manifests.size() << " manifests, " << csvs.size()
             << " csv files -> " << out << "\n";
}

// --- dispatch -----------------------------------------------------------------------------

struct SubcommandEntry {
    const char* name;
    const char* blurb;
    void (*run)(RunContext&);
};

inline const std::array<SubcommandEntry, 11>& subcommand_table() {
    static const std::array<SubcommandEntry, 11> table{{
        {"gen-data", "synthesize a difficulty-graded task set, or variants of one", &cmd_gen_data},
        {"annotate", "render gold solutions in either trace layout", &cmd_annotate},
        {"train-sft", "chain-weighted supervised fine-tuning of a solver", &cmd_train_sft},
        {"train-generator", "low-rank chain-proposal generator on (problem, chain) pairs",
         &cmd_train_generator},
        {"inject-eval", "paired plain-vs-injected evaluation with token deltas", &cmd_inject_eval},
        {"mine-hard", "flag problems the solver cannot reliably solve", &cmd_mine_hard},
        {"cold-start", "distill generator plans into a plan-first training set", &cmd_cold_start},
        {"train-grpo", "cold-start distillation, then group-relative policy updates",
         &cmd_train_grpo},
        {"evaluate", "pass@1 benchmark report over seeds", &cmd_evaluate},
        {"sweep-scaling", "accuracy versus fine-tuning set size, as CSV and SVG",
         &cmd_sweep_scaling},
        {"report", "digest run manifests and summaries into report.txt", &cmd_report},
    }};
    return table;
}

inline void print_usage(std::ostream& os) {
    os << "sst_lab - structured-solution training laboratory\n"
       << "usage: sst_lab <subcommand> [--config FILE] [--seed N] [--out-dir DIR]\n\n"
       << "subcommands:\n";
    for (const auto& s : subcommand_table()) {
        os << "  " << s.name;
        for (size_t i = std::string(s.name).size(); i < 16; ++i) os << ' ';
        os << s.blurb << "\n";
    }
    os << "\nconfigs are line-based `key = value` files with '#' comments and a\n"
       << "mandatory `schema_version = " << kConfigSchemaVersion << "` line; unknown keys are rejected.\n"
       << "seed precedence: --seed flag, config `seed`, $SST_LAB_SEED, then 0.\n"
       << "every run writes <subcommand>.manifest.json hashing all inputs and artifacts.\n";
}

struct CliArgs {
    std::string subcommand;
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir;
    bool help = false;
};

inline CliArgs parse_cli_args(const std::vector<std::string>& args) {
    CliArgs a;
    expect(!args.empty(), Errc::config_parse, "missing subcommand (try --help)");
    if (args[0] == "--help" || args[0] == "-h" || args[0] == "help") {
        a.help = true;
        return a;
    }
    a.subcommand = args[0];
    for (size_t i = 1; i < args.size(); ++i) {
        const std::string& f = args[i];
        auto value = [&](const char* flag) -> const std::string& {
            expect(i + 1 < args.size(), Errc::config_parse,
                   std::string(flag) + ": missing value");
            return args[++i];
        };
        if (f == "--config") a.config_path = value("--config");
        else if (f == "--seed") {
            int64_t s = detail::parse_int_value("--seed", value("--seed"));
            expect(s >= 0, Errc::config_parse, "--seed: must be nonnegative");
            a.seed = static_cast<uint64_t>(s);
        } else if (f == "--out-dir") a.out_dir = value("--out-dir");
        else if (f == "--help" || f == "-h") a.help = true;
        else fail(Errc::config_parse, "unknown flag '" + f + "' (try --help)");
    }
    return a;
}

// Runs one subcommand end to end and reports the outcome: 0 on success, 2 for
// a structured error (one machine-readable `error\t<code>\t<message>` line on
// the error stream), 3 for anything unforeseen.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
    try {
        CliArgs a = parse_cli_args(args);
        if (a.help) {
            print_usage(out);
            return 0;
        }
        const SubcommandEntry* cmd = nullptr;
        for (const auto& s : subcommand_table())
            if (a.subcommand == s.name) cmd = &s;
        expect(cmd != nullptr, Errc::config_parse,
               "unknown subcommand '" + a.subcommand + "' (try --help)");

        RunContext rc;
        rc.out = &out;
        if (!a.config_path.empty()) rc.cfg = load_kv_config(a.config_path);
        rc.seed = resolve_seed(rc.cfg, a.seed);
        rc.out_dir = !a.out_dir.empty() ? a.out_dir : rc.cfg.get_string("out_dir", "out");
        std::filesystem::create_directories(rc.out_dir);
        if (!a.config_path.empty()) manifest_add_input(rc.manifest, a.config_path);

        auto t0 = std::chrono::steady_clock::now();
        cmd->run(rc);
        rc.manifest.subcommand = cmd->name;
        rc.manifest.seed = rc.seed;
        rc.manifest.config = rc.cfg.values;
        rc.manifest.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::string mpath = (rc.out_dir / (std::string(cmd->name) + ".manifest.json")).string();
        write_manifest(mpath, rc.manifest);
        out << cmd->name << ": manifest " << mpath << " (artifact digest "
            << manifest_artifact_digest(rc.manifest) << ")\n";
        return 0;
    } catch (const Error& e) {
        err << "error\t" << errc_name(e.code()) << "\t" << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        err << "error\tinternal\t" << e.what() << "\n";
        return 3;
    }
}

inline int run_cli(int argc, char** argv) {
    return run_cli(std::vector<std::string>(argv + 1, argv + argc));
}

} // namespace cli
} // namespace sst
