#include "genfusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "genfusion/error.hpp"

namespace genfusion {

namespace {

constexpr char kMagic[8] = {'G', 'E', 'N', 'F', 'C', 'K', 'P', 'T'};

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_ += s;
    }
    void raw(const char* p, std::size_t n) { out_.append(p, n); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
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
        const std::uint32_t n = u32();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void expect_raw(const char* p, std::size_t n, const char* what) {
        need(n);
        if (std::memcmp(bytes_.data() + pos_, p, n) != 0) fail(std::string("bad ") + what);
        pos_ += n;
    }
    bool done() const { return pos_ == bytes_.size(); }
    [[noreturn]] void fail(const std::string& what) const {
        fail_validation(source_ + ": " + what + " at byte " + std::to_string(pos_));
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) fail("truncated checkpoint");
    }
    const std::string& bytes_;
    std::string source_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.raw(kMagic, sizeof kMagic);
    w.u32(kCheckpointVersion);
    const DenoiserConfig& c = ckpt.params.config;
    w.u32(static_cast<std::uint32_t>(c.latent_channels));
    w.u32(static_cast<std::uint32_t>(c.features));
    w.u32(static_cast<std::uint32_t>(c.time_dim));
    w.u32(static_cast<std::uint32_t>(c.cond_dim));
    w.u32(static_cast<std::uint32_t>(ckpt.codec_factor));

    w.u32(static_cast<std::uint32_t>(ckpt.schedule.steps));
    for (double b : ckpt.schedule.beta) w.f64(b);

    const PromptVocabulary& v = ckpt.vocab;
    w.u32(static_cast<std::uint32_t>(v.dim()));
    w.u32(static_cast<std::uint32_t>(v.tokens().size()));
    for (const auto& tok : v.tokens()) {
        w.str(tok);
        w.u8(v.is_reserved(tok) ? 1 : 0);
    }
    for (double x : v.table()) w.f64(x);

    const auto tensors = ckpt.params.tensors();
    w.u32(static_cast<std::uint32_t>(tensors.size()));
    for (const ParamTensor* t : tensors) {
        w.str(t->name);
        w.u32(static_cast<std::uint32_t>(t->shape.size()));
        for (int d : t->shape) w.u64(static_cast<std::uint64_t>(d));
        for (double x : t->values) w.f64(x);
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& source) {
    Reader r(bytes, source);
    r.expect_raw(kMagic, sizeof kMagic, "magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) r.fail("unsupported checkpoint version " + std::to_string(version));

    DenoiserConfig c;
    c.latent_channels = static_cast<int>(r.u32());
    c.features = static_cast<int>(r.u32());
    c.time_dim = static_cast<int>(r.u32());
    c.cond_dim = static_cast<int>(r.u32());
    Checkpoint ckpt;
    ckpt.codec_factor = static_cast<int>(r.u32());
    ckpt.params = DenoiserParams::zeros(c);

    const std::uint32_t steps = r.u32();
    if (steps == 0 || steps > 1'000'000) r.fail("implausible step count");
    std::vector<double> beta(steps);
    for (double& b : beta) b = r.f64();
    ckpt.schedule = schedule_from_betas(std::move(beta));

    const std::uint32_t dim = r.u32();
    const std::uint32_t n_tokens = r.u32();
    if (n_tokens > 100'000) r.fail("implausible vocabulary size");
    std::vector<std::string> tokens, reserved;
    for (std::uint32_t i = 0; i < n_tokens; ++i) {
        tokens.push_back(r.str());
        if (r.u8()) reserved.push_back(tokens.back());
    }
    std::vector<double> table(static_cast<std::size_t>(n_tokens) * dim);
    for (double& x : table) x = r.f64();
    ckpt.vocab = PromptVocabulary::from_table(std::move(tokens), std::move(reserved), static_cast<int>(dim),
                                              std::move(table));
    if (ckpt.vocab.dim() != c.cond_dim) r.fail("vocabulary dimension does not match condition dimension");

    const std::uint32_t n_tensors = r.u32();
    if (n_tensors != DenoiserParams::tensor_count) r.fail("unexpected tensor count");
    for (std::uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = r.str();
        ParamTensor& t = ckpt.params.tensor(name);
        const std::uint32_t ndim = r.u32();
        if (ndim != t.shape.size()) r.fail("tensor '" + name + "' rank mismatch");
        for (int d : t.shape)
            if (r.u64() != static_cast<std::uint64_t>(d)) r.fail("tensor '" + name + "' shape mismatch");
        for (double& x : t.values) x = r.f64();
    }
    if (!r.done()) r.fail("trailing bytes");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write checkpoint '" + path.string() + "'");
    out << encode_checkpoint(ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return decode_checkpoint(ss.str(), path.string());
}

}  // namespace genfusion
