#include "genfusion/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <vector>

#include "genfusion/error.hpp"

namespace genfusion {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
T parse_integer(const std::string& s, const std::string& key) {
    T v{};
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) fail_validation("config key '" + key + "': bad integer '" + s + "'");
    return v;
}

double parse_double(const std::string& s, const std::string& key) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        fail_validation("config key '" + key + "': bad number '" + s + "'");
    }
    if (used != s.size()) fail_validation("config key '" + key + "': bad number '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    fail_validation("config key '" + key + "': bad boolean '" + s + "'");
}

struct Field {
    std::string key;
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

template <typename T>
Field int_field(std::string key, T& ref) {
    return {key, [&ref] { return std::to_string(ref); },
            [&ref, key](const std::string& s) { ref = parse_integer<T>(s, key); }};
}

Field double_field(std::string key, double& ref) {
    return {key, [&ref] { return fmt_double(ref); }, [&ref, key](const std::string& s) { ref = parse_double(s, key); }};
}

Field bool_field(std::string key, bool& ref) {
    return {key, [&ref] { return std::string(ref ? "true" : "false"); },
            [&ref, key](const std::string& s) { ref = parse_bool(s, key); }};
}

Field string_field(std::string key, std::string& ref) {
    return {key, [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}

std::vector<Field> fields(RunConfig& c) {
    std::vector<Field> f;
    f.push_back(int_field("seed", c.seed));
    f.push_back(int_field("jobs", c.jobs));

    f.push_back(int_field("scene.height", c.scene.height));
    f.push_back(int_field("scene.width", c.scene.width));
    f.push_back(int_field("scene.min_apples", c.scene.min_apples));
    f.push_back(int_field("scene.max_apples", c.scene.max_apples));
    f.push_back(int_field("scene.min_radius", c.scene.min_radius));
    f.push_back(int_field("scene.max_radius", c.scene.max_radius));
    f.push_back(double_field("scene.noise_amplitude", c.scene.noise_amplitude));
    f.push_back(double_field("scene.occlusion_prob", c.scene.occlusion_prob));
    f.push_back(double_field("scene.background_r", c.scene.background[0]));
    f.push_back(double_field("scene.background_g", c.scene.background[1]));
    f.push_back(double_field("scene.background_b", c.scene.background[2]));

    f.push_back(int_field("synth.count", c.synth_count));
    f.push_back(int_field("synth.train", c.synth_train));
    f.push_back(int_field("synth.val", c.synth_val));

    f.push_back(int_field("codec.factor", c.codec_factor));

    f.push_back(int_field("schedule.steps", c.schedule_steps));
    f.push_back(double_field("schedule.beta_start", c.beta_start));
    f.push_back(double_field("schedule.beta_end", c.beta_end));

    f.push_back(int_field("denoiser.features", c.denoiser.features));
    f.push_back(int_field("denoiser.time_dim", c.denoiser.time_dim));
    f.push_back(int_field("denoiser.cond_dim", c.denoiser.cond_dim));

    f.push_back(int_field("pretrain.steps", c.pretrain_steps));
    f.push_back(int_field("pretrain.batch", c.pretrain_batch));
    f.push_back(double_field("pretrain.lr", c.pretrain_adam.lr));
    f.push_back(double_field("pretrain.beta1", c.pretrain_adam.beta1));
    f.push_back(double_field("pretrain.beta2", c.pretrain_adam.beta2));
    f.push_back(double_field("pretrain.eps", c.pretrain_adam.eps));
    f.push_back(double_field("pretrain.weight_decay", c.pretrain_adam.weight_decay));

    f.push_back(string_field("dreambooth.identifier", c.dreambooth.identifier));
    f.push_back(string_field("dreambooth.class_noun", c.dreambooth.class_noun));
    f.push_back(double_field("dreambooth.lambda", c.dreambooth.lambda));
    f.push_back(int_field("dreambooth.prior_count", c.dreambooth.prior_count));
    f.push_back(int_field("dreambooth.epochs", c.dreambooth.epochs));
    f.push_back(double_field("dreambooth.lr", c.dreambooth.adam.lr));
    f.push_back(double_field("dreambooth.beta1", c.dreambooth.adam.beta1));
    f.push_back(double_field("dreambooth.beta2", c.dreambooth.adam.beta2));
    f.push_back(double_field("dreambooth.eps", c.dreambooth.adam.eps));
    f.push_back(double_field("dreambooth.weight_decay", c.dreambooth.adam.weight_decay));
    f.push_back(int_field("dreambooth.instances", c.instance_count));
    f.push_back(bool_field("dreambooth.shared_priors", c.shared_priors));
    f.push_back(bool_field("dreambooth.annotation_channel", c.annotation_channel));

    f.push_back(int_field("generate.total", c.generate_total));
    f.push_back(int_field("generate.green_weight", c.green_weight));
    f.push_back(int_field("generate.red_weight", c.red_weight));

    f.push_back(int_field("annotate.dot_side", c.dots.dot_side));
    f.push_back(double_field("annotate.intensity", c.dots.intensity));
    f.push_back(double_field("annotate.threshold", c.dots.extraction_threshold));
    f.push_back(int_field("annotate.channel", c.dots.annotation_channel));
    f.push_back(int_field("annotate.min_area", c.dots.min_component_area));

    f.push_back(int_field("filter.pca_dims", c.filter.pca_dims));
    f.push_back(int_field("filter.tsne_dims", c.filter.tsne_dims));
    f.push_back(double_field("filter.perplexity", c.filter.tsne_perplexity));
    f.push_back(int_field("filter.tsne_iters", c.filter.tsne_iters));
    f.push_back(int_field("filter.kmeans_k", c.filter.kmeans_k));
    f.push_back(int_field("filter.kmeans_restarts", c.filter.kmeans_restarts));

    f.push_back(double_field("detect.max_distance", c.detector.max_distance));
    f.push_back(double_field("detect.score_threshold", c.detector.score_threshold));
    f.push_back(int_field("detect.min_area", c.detector.min_area));

    f.push_back(double_field("eval.nms_iou", c.nms_iou));
    return f;
}

}  // namespace

void RunConfig::validate() const {
    require(jobs >= 1, "jobs must be >= 1");
    scene.validate();
    require(synth_count >= 0 && synth_train >= 0 && synth_val >= 0 && synth_train + synth_val <= synth_count,
            "synth.train + synth.val must not exceed synth.count");
    require(codec_factor >= 1 && scene.height % codec_factor == 0 && scene.width % codec_factor == 0,
            "codec.factor must divide the scene size");
    require(schedule_steps >= 1, "schedule.steps must be >= 1");
    require(denoiser.features > 0 && denoiser.time_dim > 0 && denoiser.time_dim % 2 == 0 && denoiser.cond_dim > 0,
            "denoiser dimensions must be positive (time_dim even)");
    require(pretrain_steps >= 0 && pretrain_batch >= 1, "pretrain.steps >= 0 and pretrain.batch >= 1 required");
    require(dreambooth.lambda >= 0.0, "dreambooth.lambda must be non-negative");
    require(dreambooth.prior_count >= 0 && dreambooth.epochs >= 0 && instance_count >= 1,
            "dreambooth counts must be non-negative (instances >= 1)");
    require(generate_total >= 0, "generate.total must be non-negative");
    dots.validate();
    require(filter.kmeans_k >= 1 && filter.pca_dims >= 1 && filter.tsne_dims >= 1, "filter dimensions must be >= 1");
    require(nms_iou > 0.0 && nms_iou < 1.0, "eval.nms_iou must lie in (0, 1)");
}

RunConfig parse_config(const std::string& text, const std::string& source) {
    RunConfig c;
    auto table = fields(c);
    std::set<std::string> seen;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail_validation(where + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
        if (it == table.end()) fail_validation(where + ": unknown key '" + key + "'");
        if (!seen.insert(key).second) fail_validation(where + ": duplicate key '" + key + "'");
        try {
            it->set(value);
        } catch (const ValidationError& e) {
            fail_validation(where + ": " + e.what());
        }
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string dump_config(const RunConfig& config) {
    RunConfig copy = config;
    std::string out;
    for (const Field& f : fields(copy)) out += f.key + " = " + f.get() + "\n";
    return out;
}

}  // namespace genfusion
