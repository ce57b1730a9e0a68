#include "chembfn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "chembfn/tokenizer.hpp"

namespace chembfn {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'C', 'H', 'E', 'M', 'B', 'F', 'N', '\0'};

class Writer {
public:
    explicit Writer(std::ofstream& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.put(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        out_.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
    void matrix(const Matrix& m) {
        u64(m.rows());
        u64(m.cols());
        for (double v : m.storage()) f64(v);
    }

private:
    std::ofstream& out_;
};

class Reader {
public:
    Reader(std::ifstream& in, std::string path) : in_(in), path_(std::move(path)) {}
    std::uint8_t u8() {
        const int c = in_.get();
        if (c == std::char_traits<char>::eof()) throw CheckpointError(path_ + ": truncated checkpoint");
        return static_cast<std::uint8_t>(c);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        if (n > (1ULL << 30)) throw CheckpointError(path_ + ": implausible string length");
        std::string s(n, '\0');
        in_.read(s.data(), static_cast<std::streamsize>(n));
        if (!in_) throw CheckpointError(path_ + ": truncated checkpoint");
        return s;
    }
    Matrix matrix() {
        const std::uint64_t r = u64();
        const std::uint64_t c = u64();
        if (r > (1ULL << 28) || c > (1ULL << 28) || r * c > (1ULL << 30))
            throw CheckpointError(path_ + ": implausible tensor shape");
        Matrix m(r, c);
        for (double& v : m.storage()) v = f64();
        return m;
    }

private:
    std::ifstream& in_;
    std::string path_;
};

json network_to_json(const NetworkConfig& c) {
    return {{"n_layers", c.n_layers},
            {"n_heads", c.n_heads},
            {"hidden_dim", c.hidden_dim},
            {"ffn_dim", c.ffn_dim},
            {"dropout", c.dropout},
            {"k_categories", c.k_categories},
            {"time_hidden", c.time_hidden},
            {"label_dim", c.label_dim},
            {"label_hidden", c.label_hidden},
            {"attention_temperature", c.attention_temperature},
            {"xpos_scale_base", c.xpos_scale_base},
            {"xpos_gamma", c.xpos_gamma},
            {"rope_base", c.rope_base},
            {"norm_eps", c.norm_eps}};
}

NetworkConfig network_from_json(const json& j) {
    NetworkConfig c;
    c.n_layers = j.at("n_layers");
    c.n_heads = j.at("n_heads");
    c.hidden_dim = j.at("hidden_dim");
    c.ffn_dim = j.at("ffn_dim");
    c.dropout = j.at("dropout");
    c.k_categories = j.at("k_categories");
    c.time_hidden = j.at("time_hidden");
    c.label_dim = j.at("label_dim");
    c.label_hidden = j.at("label_hidden");
    c.attention_temperature = j.at("attention_temperature");
    c.xpos_scale_base = j.at("xpos_scale_base");
    c.xpos_gamma = j.at("xpos_gamma");
    c.rope_base = j.at("rope_base");
    c.norm_eps = j.at("norm_eps");
    return c;
}

void check_vocab(const std::string& stored, const std::string& path) {
    const std::string current = build_vocabulary().hash();
    if (stored != current)
        throw CheckpointError(path + ": vocabulary hash " + stored + " does not match tokenizer hash " + current);
}

ParamStore to_store(std::vector<std::pair<std::string, Matrix>>& tensors, const std::string& prefix) {
    ParamStore store;
    for (auto& [name, m] : tensors)
        if (name.compare(0, prefix.size(), prefix) == 0) store.add(name.substr(prefix.size()), std::move(m));
    return store;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot open " + tmp + " for writing");
        out.write(kMagic, sizeof kMagic);
        Writer w(out);
        w.u32(kCheckpointVersion);
        w.str(data.kind);
        w.str(data.meta);
        w.u64(data.tensors.size());
        for (const auto& [name, m] : data.tensors) {
            w.str(name);
            w.matrix(m);
        }
        w.u8(data.optimizer ? 1 : 0);
        if (data.optimizer) {
            const AdamWState& st = *data.optimizer;
            if (st.m.size() != data.tensors.size() || st.v.size() != data.tensors.size())
                throw CheckpointError("optimizer state does not align with tensors");
            w.u64(static_cast<std::uint64_t>(st.step));
            for (std::size_t i = 0; i < st.m.size(); ++i) {
                w.matrix(st.m[i]);
                w.matrix(st.v[i]);
            }
        }
        if (!out) throw CheckpointError("write to " + tmp + " failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot move checkpoint into " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path);
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw CheckpointError(path + ": not a checkpoint file");
    Reader r(in, path);
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw CheckpointError(path + ": unsupported checkpoint version " + std::to_string(version));
    CheckpointData data;
    data.kind = r.str();
    data.meta = r.str();
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string name = r.str();
        data.tensors.emplace_back(std::move(name), r.matrix());
    }
    if (r.u8()) {
        AdamWState st;
        st.step = static_cast<std::int64_t>(r.u64());
        for (std::uint64_t i = 0; i < n; ++i) {
            st.m.push_back(r.matrix());
            st.v.push_back(r.matrix());
        }
        data.optimizer = std::move(st);
    }
    return data;
}

void save_denoiser(const std::string& path, const Denoiser& net, const ScheduleParams& schedule,
                   const TrainProgress& progress, const AdamWState* optimizer) {
    json meta = {{"network", network_to_json(net.config())},
                 {"schedule",
                  {{"kind", to_string(schedule.kind)},
                   {"beta1", schedule.beta_one},
                   {"k_categories", schedule.k_categories},
                   {"enforce_beta_cap", schedule.enforce_beta_cap}}},
                 {"vocab_hash", build_vocabulary().hash()},
                 {"progress",
                  {{"step", progress.step},
                   {"epoch", progress.epoch},
                   {"seed", progress.seed},
                   {"seq_len", progress.seq_len}}}};
    CheckpointData data;
    data.kind = "denoiser";
    data.meta = meta.dump(2);
    const ParamStore& p = net.params();
    for (std::size_t i = 0; i < p.size(); ++i) data.tensors.emplace_back(p.name(i), p.value(i));
    if (optimizer && !optimizer->m.empty()) data.optimizer = *optimizer;
    write_checkpoint(path, data);
}

DenoiserCheckpoint load_denoiser(const std::string& path) {
    CheckpointData data = read_checkpoint(path);
    if (data.kind != "denoiser") throw CheckpointError(path + ": expected a denoiser checkpoint, found " + data.kind);
    DenoiserCheckpoint ck;
    try {
        const json meta = json::parse(data.meta);
        ck.vocab_hash = meta.at("vocab_hash");
        check_vocab(ck.vocab_hash, path);
        ck.network = network_from_json(meta.at("network"));
        const json& s = meta.at("schedule");
        ck.schedule.kind = parse_schedule_kind(s.at("kind"));
        ck.schedule.beta_one = s.at("beta1");
        ck.schedule.k_categories = s.at("k_categories");
        ck.schedule.enforce_beta_cap = s.at("enforce_beta_cap");
        const json& pr = meta.at("progress");
        ck.progress.step = pr.at("step");
        ck.progress.epoch = pr.at("epoch");
        ck.progress.seed = pr.at("seed");
        ck.progress.seq_len = pr.at("seq_len");
    } catch (const json::exception& e) {
        throw CheckpointError(path + ": malformed metadata: " + e.what());
    }
    ck.params = to_store(data.tensors, "");
    ck.optimizer = std::move(data.optimizer);
    return ck;
}

void save_head(const std::string& path, const PredictionHead& head, const Denoiser& backbone) {
    const HeadConfig& c = head.config();
    json meta = {{"head",
                  {{"task", to_string(c.task)},
                   {"input_dim", c.input_dim},
                   {"hidden_dim", c.hidden_dim},
                   {"n_outputs", c.n_outputs},
                   {"dropout", c.dropout},
                   {"target_mean", head.target_mean()},
                   {"target_std", head.target_std()}}},
                 {"network", network_to_json(backbone.config())},
                 {"vocab_hash", build_vocabulary().hash()}};
    CheckpointData data;
    data.kind = "head";
    data.meta = meta.dump(2);
    const ParamStore& hp = head.params();
    for (std::size_t i = 0; i < hp.size(); ++i) data.tensors.emplace_back(hp.name(i), hp.value(i));
    const ParamStore& bp = backbone.params();
    for (std::size_t i = 0; i < bp.size(); ++i) data.tensors.emplace_back("backbone." + bp.name(i), bp.value(i));
    write_checkpoint(path, data);
}

HeadCheckpoint load_head(const std::string& path) {
    CheckpointData data = read_checkpoint(path);
    if (data.kind != "head") throw CheckpointError(path + ": expected a head checkpoint, found " + data.kind);
    HeadCheckpoint ck;
    try {
        const json meta = json::parse(data.meta);
        ck.vocab_hash = meta.at("vocab_hash");
        check_vocab(ck.vocab_hash, path);
        const json& h = meta.at("head");
        ck.config.task = parse_task(h.at("task"));
        ck.config.input_dim = h.at("input_dim");
        ck.config.hidden_dim = h.at("hidden_dim");
        ck.config.n_outputs = h.at("n_outputs");
        ck.config.dropout = h.at("dropout");
        ck.target_mean = h.at("target_mean").get<std::vector<double>>();
        ck.target_std = h.at("target_std").get<std::vector<double>>();
        ck.network = network_from_json(meta.at("network"));
    } catch (const json::exception& e) {
        throw CheckpointError(path + ": malformed metadata: " + e.what());
    }
    ck.backbone_params = to_store(data.tensors, "backbone.");
    ck.head_params = to_store(data.tensors, "head.");
    // to_store strips the prefix; the head layout expects it.
    ParamStore head_named;
    for (std::size_t i = 0; i < ck.head_params.size(); ++i)
        head_named.add("head." + ck.head_params.name(i), ck.head_params.value(i));
    ck.head_params = std::move(head_named);
    return ck;
}

}  // namespace chembfn
