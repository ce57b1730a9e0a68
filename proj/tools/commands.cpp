#include "commands.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <set>
#include <sstream>

#include "chembfn/bfn.hpp"
#include "chembfn/checkpoint.hpp"
#include "chembfn/config.hpp"
#include "chembfn/dataset.hpp"
#include "chembfn/finetune.hpp"
#include "chembfn/metrics.hpp"
#include "chembfn/network.hpp"
#include "chembfn/schedule.hpp"
#include "chembfn/tokenizer.hpp"
#include "chembfn/trainer.hpp"

#ifndef CHEMBFN_GIT_DESCRIBE
#define CHEMBFN_GIT_DESCRIBE "unknown"
#endif

namespace chembfn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string git_describe() { return CHEMBFN_GIT_DESCRIBE; }

namespace {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Options shared by every subcommand that resolves a RunConfig.
struct ConfigOptions {
    std::string config_path;
    std::string profile = "desk";
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> padding;
    std::optional<std::size_t> max_len;

    void attach(CLI::App* app) {
        app->add_option("--config", config_path, "INI config file")->check(CLI::ExistingFile);
        app->add_option("--profile", profile, "Base profile: desk or paper_scale");
        app->add_option("--set", overrides, "Override a config key, e.g. --set training.lr=5e-4");
        app->add_option("--seed", seed, "Random seed");
        app->add_option("--padding", padding, "Padding strategy: dynamic or global");
        app->add_option("--max-len", max_len, "Global padding length (tokens, including <start>/<end>)");
    }

    RunConfig resolve() const {
        RunConfig cfg = RunConfig::profile(profile);
        if (!config_path.empty()) cfg.load_file(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) {
            cfg.training.seed = *seed;
            cfg.sampling.seed = *seed;
        }
        if (padding) cfg.set("data.padding", *padding);
        if (max_len) cfg.data.max_len = *max_len;
        return cfg;
    }
};

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> values;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(cell, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
        if (used == 0 || used != cell.size() || !std::isfinite(v))
            throw UsageError("expected a comma-separated list of numbers, got '" + text + "'");
        values.push_back(v);
    }
    if (values.empty()) throw UsageError("empty number list");
    return values;
}

std::vector<std::string> split_names(const std::string& text) {
    std::vector<std::string> names;
    std::stringstream ss(text);
    std::string cell;
    while (std::getline(ss, cell, ','))
        if (!cell.empty()) names.push_back(cell);
    return names;
}

void prepare_out_dir(const std::string& dir) {
    if (dir.empty()) throw UsageError("--out is required");
    fs::create_directories(dir);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << std::setprecision(17);
    return f;
}

void write_run_record(const std::string& dir, const std::string& command, const RunConfig& cfg,
                      std::uint64_t seed, const std::vector<std::string>& args) {
    open_out(fs::path(dir) / "config.ini") << cfg.to_ini();
    json rec = {{"command", command},
                {"arguments", args},
                {"seed", seed},
                {"vocab_hash", build_vocabulary().hash()},
                {"git_describe", git_describe()}};
    open_out(fs::path(dir) / "run.json") << rec.dump(2) << '\n';
}

std::optional<std::size_t> global_len(const RunConfig& cfg) {
    if (cfg.data.padding == PaddingStrategy::Global) return cfg.data.max_len;
    return std::nullopt;
}

bool is_csv(const std::string& path) {
    return path.size() >= 4 && path.compare(path.size() - 4, 4, ".csv") == 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    ConfigOptions config;
    std::string data;
    std::string out;
    std::string resume;
    std::optional<int> epochs;
    std::optional<std::int64_t> max_steps;
};

int cmd_train(const TrainArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    RunConfig cfg = a.config.resolve();
    if (a.epochs) cfg.training.epochs = *a.epochs;
    if (a.max_steps) cfg.training.max_steps = *a.max_steps;
    if (a.data.empty()) throw UsageError("train: --data is required");

    std::optional<DenoiserCheckpoint> resumed;
    if (!a.resume.empty()) {
        resumed = load_denoiser(a.resume);
        cfg.network = resumed->network;
    }

    const Vocabulary& vocab = build_vocabulary();
    std::vector<SmilesRecord> records;
    std::vector<Labels> labels;
    if (is_csv(a.data)) {
        LabeledTable table = read_labeled_csv(a.data, split_names(cfg.data.label_columns));
        if (cfg.network.label_dim == 0) cfg.network.label_dim = static_cast<int>(table.label_names.size());
        if (static_cast<std::size_t>(cfg.network.label_dim) != table.label_names.size())
            throw ConfigError("network.label_dim is " + std::to_string(cfg.network.label_dim) + " but the data has " +
                              std::to_string(table.label_names.size()) + " label columns");
        records = std::move(table.rows);
        for (const auto& r : records) labels.push_back(r.labels);
    } else {
        records = read_smiles_file(a.data);
    }
    cfg.validate();
    const std::vector<TokenSequence> seqs = tokenize_records(records, a.data, vocab, global_len(cfg));

    prepare_out_dir(a.out);
    write_run_record(a.out, "train", cfg, cfg.training.seed, args);

    const ScheduleParams schedule = resumed ? resumed->schedule : cfg.schedule_params();
    Denoiser net = resumed ? Denoiser(cfg.network, std::move(resumed->params))
                           : Denoiser(cfg.network, cfg.training.seed);
    TrainOptions opts;
    opts.epochs = cfg.training.epochs;
    opts.max_steps = cfg.training.max_steps;
    opts.batch_size = cfg.training.batch_size;
    opts.lr = cfg.training.lr;
    opts.warmup_steps = cfg.training.warmup_steps;
    opts.warmup_start = cfg.training.warmup_start;
    opts.weight_decay = cfg.training.weight_decay;
    opts.clip_norm = cfg.training.clip_norm;
    opts.p_uncond = cfg.training.p_uncond;
    opts.seed = cfg.training.seed;
    opts.padding = cfg.data.padding;
    opts.max_len = cfg.data.max_len;
    GenerativeTrainer trainer(net, schedule, opts);
    if (resumed) trainer.restore(resumed->progress, std::move(resumed->optimizer));

    std::ofstream log = open_out(fs::path(a.out) / "loss_log.csv");
    log << "step,epoch,lr,loss,grad_norm\n";
    const std::string ckpt = (fs::path(a.out) / "checkpoint.bin").string();
    auto save = [&] { save_denoiser(ckpt, net, schedule, trainer.progress(), &trainer.optimizer().state()); };
    trainer.run(
        seqs, labels.empty() ? nullptr : &labels,
        [&](const StepRecord& r) { log << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.loss << ',' << r.grad_norm << '\n'; },
        [&](int epoch) {
            if (epoch % cfg.training.checkpoint_every == 0) save();
        });
    save();
    out << "trained " << trainer.progress().step << " steps over " << trainer.progress().epoch
        << " epochs; checkpoint " << ckpt << '\n';
    return kOk;
}

// ---------------------------------------------------------------- sample

struct SampleArgs {
    ConfigOptions config;
    std::string checkpoint;
    std::string out;
    std::string data;
    std::optional<std::size_t> n;
    std::optional<int> steps;
    std::optional<double> guidance_w;
    std::optional<std::string> labels;
    std::optional<std::string> scaffold;
    std::optional<std::size_t> seq_len;
};

int cmd_sample(const SampleArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    if (a.checkpoint.empty()) throw UsageError("sample: --checkpoint is required");
    RunConfig cfg = a.config.resolve();
    DenoiserCheckpoint ck = load_denoiser(a.checkpoint);
    cfg.network = ck.network;
    if (a.n) cfg.sampling.n = *a.n;
    if (a.steps) cfg.sampling.steps = *a.steps;
    if (a.guidance_w) cfg.sampling.guidance_w = *a.guidance_w;
    if (a.seq_len) cfg.sampling.seq_len = *a.seq_len;
    cfg.validate();

    const Vocabulary& vocab = build_vocabulary();
    Denoiser net(ck.network, std::move(ck.params));
    GenerationConfig gen;
    gen.n_steps = cfg.sampling.steps;
    gen.guidance_w = cfg.sampling.guidance_w;
    gen.seed = cfg.sampling.seed;
    gen.seq_len = cfg.sampling.seq_len > 0 ? cfg.sampling.seq_len : ck.progress.seq_len;
    if (gen.seq_len < 2) throw ConfigError("sampling.seq_len is unset and the checkpoint records no length");
    if (a.labels) {
        if (net.label_dim() == 0) throw UsageError("--labels given but the checkpoint is unconditional");
        gen.conditioning = parse_list(*a.labels);
        if (gen.conditioning->size() != net.label_dim())
            throw UsageError("--labels has " + std::to_string(gen.conditioning->size()) + " values, network expects " +
                             std::to_string(net.label_dim()));
    }
    if (a.scaffold) {
        TokenSequence scaffold;
        try {
            scaffold = tokenize(*a.scaffold, vocab);
        } catch (const std::exception& e) {
            throw UsageError(std::string("--scaffold does not tokenize: ") + e.what());
        }
        // <start> plus the scaffold body are fixed; <end> stays free so the
        // model can extend the scaffold.
        const std::size_t fixed = scaffold.size() - 1;
        if (fixed + 1 > gen.seq_len)
            throw UsageError("scaffold needs " + std::to_string(fixed + 1) + " positions, sequence length is " +
                             std::to_string(gen.seq_len));
        ClampMask mask;
        mask.fixed.assign(gen.seq_len, false);
        mask.reference.ids.assign(gen.seq_len, vocab.pad_id());
        for (std::size_t d = 0; d < fixed; ++d) {
            mask.fixed[d] = true;
            mask.reference.ids[d] = scaffold.ids[d];
        }
        gen.clamp = mask;
    }

    prepare_out_dir(a.out);
    write_run_record(a.out, "sample", cfg, cfg.sampling.seed, args);
    const std::vector<TokenSequence> seqs = sample(net, gen, ck.schedule, vocab, cfg.sampling.n);
    std::vector<std::string> smiles;
    std::ofstream f = open_out(fs::path(a.out) / "samples.smi");
    for (const auto& s : seqs) {
        smiles.push_back(detokenize(s, vocab, DecodeMode::Lenient));
        f << smiles.back() << '\n';
    }
    std::optional<std::set<std::string>> reference;
    if (!a.data.empty()) {
        reference.emplace();
        if (is_csv(a.data)) {
            for (const auto& r : read_labeled_csv(a.data, split_names(cfg.data.label_columns)).rows) reference->insert(r.smiles);
        } else {
            for (const auto& r : read_smiles_file(a.data)) reference->insert(r.smiles);
        }
    }
    const SampleSummary summary = summarize_samples(smiles, reference ? &*reference : nullptr);
    {
        std::ofstream f2 = open_out(fs::path(a.out) / "summary.csv");
        write_summary_csv(f2, summary);
    }
    out << "sampled " << summary.n << " molecules; validity " << summary.validity << ", uniqueness "
        << summary.uniqueness;
    if (summary.novelty >= 0.0) out << ", novelty " << summary.novelty;
    out << '\n';
    return kOk;
}

// ---------------------------------------------------------------- finetune / predict

struct FinetuneArgs {
    ConfigOptions config;
    std::string checkpoint;
    std::string data;
    std::string valid;
    std::string out;
    std::optional<std::string> task;
    std::optional<std::string> label_columns;
    std::optional<int> epochs;
};

LabeledSet load_labeled(const std::string& path, const std::vector<std::string>& columns, const RunConfig& cfg,
                        std::vector<std::string>* names) {
    LabeledTable table = read_labeled_csv(path, columns);
    if (names) *names = table.label_names;
    LabeledSet set;
    set.seqs = tokenize_records(table.rows, path, build_vocabulary(), global_len(cfg));
    for (const auto& r : table.rows) set.labels.push_back(r.labels);
    return set;
}

int cmd_finetune(const FinetuneArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    if (a.checkpoint.empty() || a.data.empty()) throw UsageError("finetune: --checkpoint and --data are required");
    RunConfig cfg = a.config.resolve();
    if (a.task) cfg.set("finetune.task", *a.task);
    if (a.label_columns) cfg.data.label_columns = *a.label_columns;
    if (a.epochs) cfg.finetune.epochs = *a.epochs;
    DenoiserCheckpoint ck = load_denoiser(a.checkpoint);
    cfg.network = ck.network;
    cfg.validate();

    std::vector<std::string> names;
    const auto columns = split_names(cfg.data.label_columns);
    const LabeledSet train = load_labeled(a.data, columns, cfg, &names);
    std::optional<LabeledSet> valid;
    if (!a.valid.empty()) valid = load_labeled(a.valid, names, cfg, nullptr);

    HeadConfig hc;
    hc.task = cfg.finetune.task;
    hc.input_dim = ck.network.hidden_dim;
    hc.hidden_dim = cfg.finetune.head_hidden;
    hc.dropout = cfg.finetune.head_dropout;
    if (hc.task == TaskKind::Regression) {
        hc.n_outputs = static_cast<int>(names.size());
    } else {
        if (names.size() != 1) throw ConfigError("classification expects exactly one label column");
        double top = 0.0;
        for (const auto& y : train.labels) top = std::max(top, y[0]);
        hc.n_outputs = std::max(2, static_cast<int>(top) + 1);
    }
    Denoiser net(ck.network, std::move(ck.params));
    PredictionHead head(hc, cfg.training.seed);

    FinetuneConfig fc;
    fc.epochs = cfg.finetune.epochs;
    fc.batch_size = cfg.finetune.batch_size;
    fc.lr = cfg.finetune.lr;
    fc.warmup_steps = cfg.finetune.warmup_steps;
    fc.warmup_start = cfg.finetune.warmup_start;
    fc.weight_decay = cfg.training.weight_decay;
    fc.dropout = cfg.finetune.dropout;
    fc.freeze_backbone = cfg.finetune.freeze_backbone;
    fc.decay_factor = cfg.finetune.decay;
    fc.patience = cfg.finetune.patience;
    fc.lr_floor = cfg.finetune.lr_floor;
    fc.padding = cfg.data.padding;
    fc.max_len = cfg.data.max_len;
    fc.seed = cfg.training.seed;

    prepare_out_dir(a.out);
    write_run_record(a.out, "finetune", cfg, cfg.training.seed, args);
    std::ofstream log = open_out(fs::path(a.out) / "finetune_log.csv");
    log << "epoch,train_loss," << (hc.task == TaskKind::Regression ? "mae" : "accuracy") << ",lr\n";
    const auto history = run_finetune(net, head, train, valid ? &*valid : nullptr, fc, [&](const FinetuneEpoch& e) {
        log << e.epoch << ',' << e.train_loss << ',' << e.metric << ',' << e.lr << '\n';
    });
    const std::string path = (fs::path(a.out) / "head.bin").string();
    save_head(path, head, net);
    out << "fine-tuned " << history.size() << " epochs; final " << (hc.task == TaskKind::Regression ? "MAE " : "accuracy ")
        << history.back().metric << "; head " << path << '\n';
    return kOk;
}

struct PredictArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
};

int cmd_predict(const PredictArgs& a, std::ostream& out) {
    if (a.checkpoint.empty() || a.data.empty() || a.out.empty())
        throw UsageError("predict: --checkpoint, --data and --out are required");
    HeadCheckpoint ck = load_head(a.checkpoint);
    Denoiser net(ck.network, std::move(ck.backbone_params));
    PredictionHead head(ck.config, std::move(ck.head_params));
    head.set_standardization(ck.target_mean, ck.target_std);

    std::vector<SmilesRecord> records;
    if (is_csv(a.data)) {
        std::ifstream probe(a.data);
        std::string header;
        std::getline(probe, header);
        // Prediction only needs the smiles column; labels are optional.
        if (header.find(',') == std::string::npos) records = read_smiles_file(a.data);
        else records = read_labeled_csv(a.data).rows;
    } else {
        records = read_smiles_file(a.data);
    }
    const auto seqs = tokenize_records(records, a.data, build_vocabulary(), std::nullopt);

    fs::path path(a.out);
    if (fs::is_directory(path)) path /= "predictions.csv";
    else if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f = open_out(path);
    const int n = ck.config.n_outputs;
    const bool classify = ck.config.task == TaskKind::Classification;
    f << "smiles";
    if (classify) {
        f << ",y_hat";
        for (int k = 0; k < n; ++k) f << ",p_" << k;
    } else if (n == 1) {
        f << ",y_hat";
    } else {
        for (int k = 0; k < n; ++k) f << ",y_hat_" << k;
    }
    f << '\n';
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        f << records[i].smiles;
        if (classify) {
            const auto p = class_probabilities(seqs[i], net, head);
            f << ',' << (std::max_element(p.begin(), p.end()) - p.begin());
            for (double v : p) f << ',' << v;
        } else {
            for (double v : predict(seqs[i], net, head)) f << ',' << v;
        }
        f << '\n';
    }
    out << "wrote " << seqs.size() << " predictions to " << path.string() << '\n';
    return kOk;
}

// ---------------------------------------------------------------- analyze-schedule

struct AnalyzeArgs {
    int k = kVocabularySize;
    std::string beta1 = "max";
    std::string kinds = "log,quadratic";
    int points = 51;
    int samples = 10000;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_analyze(const AnalyzeArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    if (a.k < 2) throw UsageError("--k must be >= 2");
    std::vector<double> betas;
    for (const auto& item : split_names(a.beta1))
        betas.push_back(item == "max" ? beta_one_max(a.k) : parse_list(item).front());
    std::vector<ScheduleKind> kinds;
    for (const auto& item : split_names(a.kinds)) kinds.push_back(parse_schedule_kind(item));
    if (betas.empty() || kinds.empty()) throw UsageError("need at least one --beta1 and one --kinds entry");
    prepare_out_dir(a.out);
    json rec = {{"command", "analyze-schedule"}, {"arguments", args},       {"seed", a.seed},
                {"vocab_hash", build_vocabulary().hash()}, {"git_describe", git_describe()}};
    open_out(fs::path(a.out) / "run.json") << rec.dump(2) << '\n';

    std::ofstream table = open_out(fs::path(a.out) / "r2_table.csv");
    table << "kind,beta1,slope,intercept,r_squared,alpha_at_1,alpha_at_1_over_beta1\n";
    const Rng root(a.seed);
    for (ScheduleKind kind : kinds) {
        for (std::size_t bi = 0; bi < betas.size(); ++bi) {
            ScheduleParams p;
            p.kind = kind;
            p.beta_one = betas[bi];
            p.k_categories = a.k;
            p.enforce_beta_cap = false;
            p.validate();
            std::ostringstream tag;
            tag << to_string(kind) << '_' << std::setprecision(6) << betas[bi];
            std::ofstream curve = open_out(fs::path(a.out) / ("schedule_" + tag.str() + ".csv"));
            curve << "t,beta,alpha\n";
            for (int j = 0; j < a.points; ++j) {
                const double t = static_cast<double>(j) / (a.points - 1);
                curve << t << ',' << beta(p, t) << ',' << alpha(p, t) << '\n';
            }
            const EntropyCurve ec = entropy_curve(p, a.points, a.samples, root.derive(bi));
            std::ofstream ef = open_out(fs::path(a.out) / ("entropy_" + tag.str() + ".csv"));
            write_entropy_csv(ef, ec);
            table << to_string(kind) << ',' << betas[bi] << ',' << ec.fit.slope << ',' << ec.fit.intercept << ','
                  << ec.fit.r_squared << ',' << alpha(p, 1.0) << ',' << alpha(p, 1.0) / betas[bi] << '\n';
            out << to_string(kind) << " beta1=" << betas[bi] << " entropy R^2=" << ec.fit.r_squared << '\n';
        }
    }
    return kOk;
}

// ---------------------------------------------------------------- tokenize / eval

struct TokenizeArgs {
    std::string data;
    std::vector<std::string> smiles;
    std::string out;
};

int cmd_tokenize(const TokenizeArgs& a, std::ostream& out) {
    const Vocabulary& vocab = build_vocabulary();
    std::vector<SmilesRecord> records;
    if (!a.data.empty()) records = read_smiles_file(a.data);
    for (std::size_t i = 0; i < a.smiles.size(); ++i) records.push_back({i + 1, a.smiles[i], {}});
    if (records.empty()) throw UsageError("tokenize: give --data or --smiles");
    const auto seqs = tokenize_records(records, a.data.empty() ? "<args>" : a.data, vocab, std::nullopt);
    std::ofstream file;
    if (!a.out.empty()) file = open_out(a.out);
    std::ostream& sink = a.out.empty() ? out : file;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        sink << records[i].smiles << '\t';
        for (std::size_t d = 0; d < seqs[i].size(); ++d) sink << (d ? " " : "") << seqs[i].ids[d];
        sink << '\n';
    }
    return kOk;
}

struct EvalArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    int points = 101;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a, const std::vector<std::string>& args, std::ostream& out) {
    if (a.checkpoint.empty() || a.data.empty()) throw UsageError("eval: --checkpoint and --data are required");
    if (a.points < 3) throw UsageError("--points must be >= 3");
    DenoiserCheckpoint ck = load_denoiser(a.checkpoint);
    Denoiser net(ck.network, std::move(ck.params));
    const auto records = read_smiles_file(a.data);
    const auto seqs = tokenize_records(records, a.data, build_vocabulary(), std::nullopt);
    prepare_out_dir(a.out);
    json rec = {{"command", "eval"}, {"arguments", args}, {"seed", a.seed},
                {"vocab_hash", build_vocabulary().hash()}, {"git_describe", git_describe()}};
    open_out(fs::path(a.out) / "run.json") << rec.dump(2) << '\n';
    const auto curve = loss_curve(net, seqs, ck.schedule, static_cast<std::size_t>(a.points), Rng(a.seed));
    std::ofstream f = open_out(fs::path(a.out) / "loss_curve.csv");
    f << "t,reconstruction,continuous\n";
    std::vector<std::pair<double, double>> cont;
    for (const auto& p : curve) {
        f << p.t << ',' << p.reconstruction << ',' << p.continuous << '\n';
        cont.emplace_back(p.t, p.continuous);
    }
    const double r2 = cumulative_loss_linearity(cont);
    open_out(fs::path(a.out) / "linearity.csv") << "cumulative_loss_r_squared\n" << r2 << '\n';
    out << "cumulative continuous-loss R^2 = " << r2 << '\n';
    return kOk;
}

void report(std::ostream& err, const std::string& kind, const std::string& message,
            const std::optional<std::pair<std::string, std::size_t>>& where = std::nullopt) {
    json j = {{"error", kind}, {"message", message}};
    if (where) {
        j["file"] = where->first;
        j["line"] = where->second;
    }
    err << j.dump() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Discrete Bayesian flow network engine for SMILES"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* c_train = app.add_subcommand("train", "Train the generative model");
    train.config.attach(c_train);
    c_train->add_option("--data", train.data, "SMILES file (one per line) or labelled CSV");
    c_train->add_option("--out", train.out, "Run directory");
    c_train->add_option("--resume", train.resume, "Continue from a checkpoint");
    c_train->add_option("--epochs", train.epochs, "Total epochs");
    c_train->add_option("--steps", train.max_steps, "Stop after this many updates");

    SampleArgs smp;
    auto* c_sample = app.add_subcommand("sample", "Generate molecules from a checkpoint");
    smp.config.attach(c_sample);
    c_sample->add_option("--checkpoint", smp.checkpoint, "Denoiser checkpoint");
    c_sample->add_option("--out", smp.out, "Output directory");
    c_sample->add_option("--data", smp.data, "Training file for the novelty metric");
    c_sample->add_option("--n", smp.n, "Number of molecules");
    c_sample->add_option("--steps", smp.steps, "Sampling steps");
    c_sample->add_option("--guidance-w", smp.guidance_w, "Classifier-free guidance strength");
    c_sample->add_option("--labels", smp.labels, "Comma-separated conditioning vector");
    c_sample->add_option("--scaffold", smp.scaffold, "SMILES prefix fixed at the start of every sample");
    c_sample->add_option("--seq-len", smp.seq_len, "Sequence length (tokens)");

    FinetuneArgs ft;
    auto* c_ft = app.add_subcommand("finetune", "Fit a prediction head on labelled data");
    ft.config.attach(c_ft);
    c_ft->add_option("--checkpoint", ft.checkpoint, "Pretrained denoiser checkpoint");
    c_ft->add_option("--data", ft.data, "Training CSV");
    c_ft->add_option("--valid", ft.valid, "Validation CSV");
    c_ft->add_option("--out", ft.out, "Run directory");
    c_ft->add_option("--task", ft.task, "regression or classification");
    c_ft->add_option("--label-columns", ft.label_columns, "Comma-separated label column names");
    c_ft->add_option("--epochs", ft.epochs, "Epochs");

    PredictArgs pr;
    auto* c_pr = app.add_subcommand("predict", "Apply a fine-tuned head");
    c_pr->add_option("--checkpoint", pr.checkpoint, "Head checkpoint");
    c_pr->add_option("--data", pr.data, "SMILES file or CSV with a smiles column");
    c_pr->add_option("--out", pr.out, "Output CSV path or directory");

    AnalyzeArgs an;
    auto* c_an = app.add_subcommand("analyze-schedule", "Tabulate schedules and entropy linearity");
    c_an->add_option("--k", an.k, "Number of categories");
    c_an->add_option("--beta1", an.beta1, "Comma-separated beta(1) values; 'max' selects the cap");
    c_an->add_option("--kinds", an.kinds, "Comma-separated schedule kinds");
    c_an->add_option("--points", an.points, "Grid points");
    c_an->add_option("--samples", an.samples, "Monte-Carlo samples per point");
    c_an->add_option("--seed", an.seed, "Random seed");
    c_an->add_option("--out", an.out, "Output directory");

    TokenizeArgs tk;
    auto* c_tk = app.add_subcommand("tokenize", "Print token ids");
    c_tk->add_option("--data", tk.data, "SMILES file");
    c_tk->add_option("--smiles", tk.smiles, "SMILES string (repeatable)")->allow_extra_args(false);
    c_tk->add_option("--out", tk.out, "Output file (default stdout)");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Loss curves and cumulative-loss linearity");
    c_ev->add_option("--checkpoint", ev.checkpoint, "Denoiser checkpoint");
    c_ev->add_option("--data", ev.data, "SMILES file");
    c_ev->add_option("--out", ev.out, "Output directory");
    c_ev->add_option("--points", ev.points, "Grid points");
    c_ev->add_option("--seed", ev.seed, "Random seed");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        report(err, "usage", e.what());
        return kUsage;
    }

    try {
        if (c_train->parsed()) return cmd_train(train, args, out);
        if (c_sample->parsed()) return cmd_sample(smp, args, out);
        if (c_ft->parsed()) return cmd_finetune(ft, args, out);
        if (c_pr->parsed()) return cmd_predict(pr, out);
        if (c_an->parsed()) return cmd_analyze(an, args, out);
        if (c_tk->parsed()) return cmd_tokenize(tk, out);
        if (c_ev->parsed()) return cmd_eval(ev, args, out);
    } catch (const UsageError& e) {
        report(err, "usage", e.what());
        return kUsage;
    } catch (const DataError& e) {
        report(err, "data", e.what(), std::make_pair(e.file(), e.line()));
        return kData;
    } catch (const ConfigError& e) {
        report(err, "config", e.what());
        return kConfig;
    } catch (const CheckpointError& e) {
        report(err, "checkpoint", e.what());
        return kCheckpoint;
    } catch (const std::exception& e) {
        report(err, "internal", e.what());
        return kInternal;
    }
    return kUsage;
}

}  // namespace chembfn::cli
