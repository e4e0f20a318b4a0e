#include "genfusion/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "genfusion/annotation_io.hpp"
#include "genfusion/checkpoint.hpp"
#include "genfusion/error.hpp"
#include "genfusion/image_io.hpp"
#include "genfusion/latent_codec.hpp"
#include "genfusion/manifest.hpp"
#include "genfusion/metrics.hpp"
#include "genfusion/parallel.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace {

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Master seed of one stage; work items then use Rng::stream(stage_seed, i).
std::uint64_t stage_seed(std::uint64_t seed, std::string_view stage) { return splitmix64(seed ^ fnv1a64(stage)); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RuntimeError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write '" + path.string() + "'");
    out << text;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string numbered(const std::string& prefix, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", i);
    return prefix + "_" + buf;
}

// Worker count is left out: artifacts must not depend on it.
ordered_json config_echo(const RunConfig& config) {
    ordered_json cfg = ordered_json::array();
    std::istringstream lines(dump_config(config));
    for (std::string line; std::getline(lines, line);)
        if (!line.starts_with("jobs ")) cfg.push_back(line);
    return cfg;
}

void log(const std::string& line) { std::cerr << line << '\n'; }

/// Records what a command read and wrote; saved as runs/<command>.json.
class RunRecord {
public:
    RunRecord(const PipelineContext& ctx, std::string command) : ctx_(ctx), command_(std::move(command)) {}

    void input(const fs::path& p) { inputs_.push_back(p); }
    void output(const fs::path& p) { outputs_.push_back(p); }
    void arg(const std::string& key, const std::string& value) { args_.emplace_back(key, value); }

    void save() const {
        ordered_json j;
        j["command"] = command_;
        j["seed"] = ctx_.config.seed;
        ordered_json args = ordered_json::object();
        for (const auto& [k, v] : args_) args[k] = v;
        j["args"] = args;
        j["config"] = config_echo(ctx_.config);
        j["inputs"] = digests(inputs_);
        j["outputs"] = digests(outputs_);
        write_file(ctx_.out / "runs" / (command_ + ".json"), j.dump(2) + "\n");
    }

private:
    ordered_json digests(const std::vector<fs::path>& paths) const {
        ordered_json arr = ordered_json::array();
        for (const auto& p : paths) {
            ordered_json e;
            e["path"] = p.lexically_relative(ctx_.out).generic_string();
            e["fnv1a64"] = hex64(fnv1a64(read_file(p)));
            arr.push_back(e);
        }
        return arr;
    }

    const PipelineContext& ctx_;
    std::string command_;
    std::vector<std::pair<std::string, std::string>> args_;
    std::vector<fs::path> inputs_;
    std::vector<fs::path> outputs_;
};

fs::path stage_dir(const PipelineContext& ctx, const std::string& stage) { return ctx.out / stage; }

fs::path require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw RuntimeError("missing " + what + " '" + p.string() + "' (run the upstream stage first)");
    return p;
}

DatasetManifest load_stage_manifest(const PipelineContext& ctx, const std::string& stage, RunRecord& rec) {
    const fs::path p = require_file(stage_dir(ctx, stage) / "manifest.jsonl", stage + " manifest");
    rec.input(p);
    return read_manifest(p);
}

DiffusionSchedule configured_schedule(const RunConfig& c) {
    return build_schedule(c.schedule_steps, c.beta_start, c.beta_end);
}

DenoiserConfig configured_denoiser(const RunConfig& c) {
    DenoiserConfig d = c.denoiser;
    d.latent_channels = 3;
    return d;
}

Shape latent_shape(const RunConfig& c) {
    return LatentCodec{c.codec_factor}.latent_shape(Shape{3, c.scene.height, c.scene.width});
}

// Loads a checkpoint and verifies it was produced under a compatible config.
Checkpoint load_compatible(const PipelineContext& ctx, const fs::path& p, RunRecord& rec) {
    rec.input(require_file(p, "checkpoint"));
    Checkpoint ckpt = load_checkpoint(p);
    const RunConfig& c = ctx.config;
    if (ckpt.params.config != configured_denoiser(c))
        fail_validation("checkpoint '" + p.string() + "' has denoiser dimensions that differ from the config");
    if (ckpt.codec_factor != c.codec_factor)
        fail_validation("checkpoint '" + p.string() + "' was trained with codec factor " +
                        std::to_string(ckpt.codec_factor) + ", config has " + std::to_string(c.codec_factor));
    if (!(ckpt.schedule == configured_schedule(c)))
        fail_validation("checkpoint '" + p.string() + "' has a diffusion schedule that differs from the config");
    return ckpt;
}

void write_meta(const PipelineContext& ctx, const fs::path& path, std::int64_t steps, double final_loss) {
    ordered_json j;
    j["format_version"] = kCheckpointVersion;
    j["seed"] = ctx.config.seed;
    j["steps"] = steps;
    j["final_loss"] = final_loss;
    j["config"] = config_echo(ctx.config);
    write_file(path, j.dump(2) + "\n");
}

std::string loss_csv(const std::vector<double>& losses) {
    std::string out = "step,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g\n", i + 1, losses[i]);
        out += buf;
    }
    return out;
}

double tail_mean(const std::vector<double>& v, std::size_t window) {
    if (v.empty()) return 0.0;
    const std::size_t n = std::min(window, v.size());
    return std::accumulate(v.end() - static_cast<std::ptrdiff_t>(n), v.end(), 0.0) / static_cast<double>(n);
}

// Replace the annotation channel of a model-space RGB image with encoded dots.
ImageTensor with_dot_channel(const ImageTensor& rgb, const std::vector<BoundingBox>& boxes, const DotConfig& dots) {
    const ImageTensor parts[] = {rgb.extract_channel(0), rgb.extract_channel(1)};
    const ImageTensor annot = channel_to_model_space(encode_dots(boxes, rgb.height(), rgb.width(), dots));
    return merge_annotation_channel(concat_channels(parts), annot);
}

std::vector<BoundingBox> plain_boxes(const ImageAnnotations& ann) {
    std::vector<BoundingBox> out;
    for (const auto& b : ann.boxes) out.push_back(b.box);
    return out;
}

}  // namespace

AnnotateMode annotate_mode_from_string(const std::string& s) {
    if (s == "encode-dots") return AnnotateMode::encode_dots;
    if (s == "encode-outlines") return AnnotateMode::encode_outlines;
    if (s == "extract") return AnnotateMode::extract;
    fail_validation("unknown annotate mode '" + s + "' (expected encode-dots, encode-outlines or extract)");
}

void cmd_synth(const PipelineContext& ctx) {
    const RunConfig& c = ctx.config;
    RunRecord rec(ctx, "synth");
    const fs::path dir = stage_dir(ctx, "synth");
    const std::uint64_t master = stage_seed(c.seed, "synth");

    DatasetManifest manifest;
    manifest.seed = c.seed;
    manifest.entries.resize(static_cast<std::size_t>(c.synth_count));
    parallel_for(manifest.entries.size(), c.jobs, [&](std::size_t i) {
        SceneSpec spec = c.scene;
        spec.color = i % 2 == 0 ? AppleColor::green : AppleColor::red;
        Rng rng = Rng::stream(master, i);
        Scene scene = gen_scene(spec, rng);
        const std::string name = numbered("scene", i);
        ImageAnnotations ann{name, spec.width, spec.height, {}};
        for (const auto& b : scene.boxes) ann.boxes.push_back({b, std::nullopt});
        write_png(dir / "images" / (name + ".png"), scene.image);
        write_annotations_json(dir / "annotations" / (name + ".json"), ann);
        manifest.entries[i] = ManifestEntry{"images/" + name + ".png", "annotations/" + name + ".json", Split::train,
                                            to_string(spec.color), Provenance::real};
    });
    Rng split_rng(stage_seed(c.seed, "split"));
    manifest = split_manifest(manifest, static_cast<std::size_t>(c.synth_train), static_cast<std::size_t>(c.synth_val),
                              split_rng);
    write_manifest(dir / "manifest.jsonl", manifest);
    for (const auto& e : manifest.entries) {
        rec.output(dir / e.image);
        rec.output(dir / e.annotation);
    }
    rec.output(dir / "manifest.jsonl");
    rec.save();
    log("synth: wrote " + std::to_string(manifest.entries.size()) + " scenes (" +
        std::to_string(manifest.count(Split::train)) + " train, " + std::to_string(manifest.count(Split::val)) +
        " val, " + std::to_string(manifest.count(Split::test)) + " test)");
}

void cmd_pretrain(const PipelineContext& ctx) {
    const RunConfig& c = ctx.config;
    RunRecord rec(ctx, "pretrain");
    const DatasetManifest synth = load_stage_manifest(ctx, "synth", rec);
    const LatentCodec codec{c.codec_factor};
    const PromptVocabulary vocab = PromptVocabulary::create_default(c.denoiser.cond_dim, stage_seed(c.seed, "vocab"));
    const ConditionVector cond = embed_prompt({"a", c.dreambooth.class_noun}, vocab);

    std::vector<TrainExample> examples;
    for (const auto& e : synth.entries) {
        if (e.split != Split::train) continue;
        const fs::path p = stage_dir(ctx, "synth") / e.image;
        rec.input(p);
        ImageTensor img = read_png(p);
        require(img.shape() == (Shape{3, c.scene.height, c.scene.width}), "synth image '" + e.image + "' has shape " +
                                                                              to_string(img.shape()));
        if (c.annotation_channel) {
            rec.input(stage_dir(ctx, "synth") / e.annotation);
            img = with_dot_channel(img, plain_boxes(read_annotations_json(stage_dir(ctx, "synth") / e.annotation)),
                                   c.dots);
        }
        examples.push_back({codec.encode(img), cond});
    }
    require(!examples.empty(), "pretrain: synth manifest has no train entries");

    Rng init_rng(stage_seed(c.seed, "init"));
    Checkpoint ckpt{init_params(configured_denoiser(c), init_rng), configured_schedule(c), vocab, c.codec_factor};
    TrainConfig tc{c.pretrain_steps, c.pretrain_batch, c.pretrain_adam};
    Rng train_rng(stage_seed(c.seed, "pretrain"));
    log("pretrain: " + std::to_string(examples.size()) + " images, " + std::to_string(tc.steps) + " steps");
    const std::vector<double> losses = train_denoiser(ckpt.params, ckpt.schedule, examples, tc, train_rng);

    const fs::path dir = stage_dir(ctx, "pretrain");
    save_checkpoint(dir / "model.ckpt", ckpt);
    write_meta(ctx, dir / "model.meta.json", tc.steps, tail_mean(losses, 100));
    write_file(dir / "loss.csv", loss_csv(losses));
    for (const char* f : {"model.ckpt", "model.meta.json", "loss.csv"}) rec.output(dir / f);
    rec.save();
    char buf[128];
    std::snprintf(buf, sizeof buf, "pretrain: loss (100-step mean) %.4f -> %.4f",
                  losses.empty() ? 0.0 : std::accumulate(losses.begin(), losses.begin() + std::min<std::ptrdiff_t>(100, std::ssize(losses)), 0.0) /
                                              std::min<double>(100.0, static_cast<double>(losses.size())),
                  tail_mean(losses, 100));
    log(buf);
}

void cmd_prior_gen(const PipelineContext& ctx) {
    const RunConfig& c = ctx.config;
    RunRecord rec(ctx, "prior-gen");
    const Checkpoint base = load_compatible(ctx, stage_dir(ctx, "pretrain") / "model.ckpt", rec);
    const LatentCodec codec{c.codec_factor};
    const ImageSet priors = generate_prior_set(base.params, base.schedule, base.vocab, c.dreambooth, latent_shape(c),
                                               stage_seed(c.seed, "prior-gen"), c.jobs);
    const fs::path dir = stage_dir(ctx, "priors");
    DatasetManifest manifest;
    manifest.seed = c.seed;
    for (std::size_t i = 0; i < priors.images.size(); ++i) {
        const std::string name = numbered("prior", i) + ".png";
        write_png(dir / "images" / name, codec.decode(priors.images[i]));
        manifest.entries.push_back({"images/" + name, "", Split::train, "", Provenance::prior});
        rec.output(dir / "images" / name);
    }
    write_manifest(dir / "manifest.jsonl", manifest);
    rec.output(dir / "manifest.jsonl");
    rec.save();
    log("prior-gen: sampled " + std::to_string(priors.images.size()) + " prior images with prompt \"a " +
        c.dreambooth.class_noun + "\"");
}

void cmd_finetune(const PipelineContext& ctx) {
    const RunConfig& c = ctx.config;
    RunRecord rec(ctx, "finetune");
    const Checkpoint base = load_compatible(ctx, stage_dir(ctx, "pretrain") / "model.ckpt", rec);
    const LatentCodec codec{c.codec_factor};
    const DatasetManifest synth = load_stage_manifest(ctx, "synth", rec);
    const DatasetManifest prior_manifest = load_stage_manifest(ctx, "priors", rec);

    DreamBoothConfig db = c.dreambooth;
    db.identifier = select_pseudo_word(base.vocab);
    if (!c.dreambooth.identifier.empty() && c.dreambooth.identifier != db.identifier) {
        require(base.vocab.is_reserved(c.dreambooth.identifier),
                "identifier '" + c.dreambooth.identifier + "' is not a reserved token of the vocabulary");
        db.identifier = c.dreambooth.identifier;
    }
    if (c.annotation_channel) db.epochs *= 2;

    std::vector<ImageTensor> all_priors;
    for (const auto& e : prior_manifest.entries) {
        const fs::path p = stage_dir(ctx, "priors") / e.image;
        rec.input(p);
        all_priors.push_back(codec.encode(read_png(p)));
    }

    const fs::path dir = stage_dir(ctx, "finetune");
    const AppleColor subjects[] = {AppleColor::green, AppleColor::red};
    for (std::size_t s = 0; s < 2; ++s) {
        const std::string color = to_string(subjects[s]);
        ImageSet instances{{}, db.instance_prompt(), "real"};
        for (const auto& e : synth.entries) {
            if (e.split != Split::train || e.color != color) continue;
            if (static_cast<int>(instances.images.size()) == c.instance_count) break;
            const fs::path p = stage_dir(ctx, "synth") / e.image;
            rec.input(p);
            ImageTensor img = read_png(p);
            if (c.annotation_channel) {
                rec.input(stage_dir(ctx, "synth") / e.annotation);
                img = with_dot_channel(img, plain_boxes(read_annotations_json(stage_dir(ctx, "synth") / e.annotation)),
                                       c.dots);
            }
            instances.images.push_back(codec.encode(img));
        }
        if (static_cast<int>(instances.images.size()) < c.instance_count)
            throw RuntimeError("finetune: only " + std::to_string(instances.images.size()) + " " + color +
                               " training scenes, need " + std::to_string(c.instance_count));

        ImageSet priors{{}, db.prior_prompt(), kPriorProvenance};
        for (std::size_t i = 0; i < all_priors.size(); ++i)
            if (c.shared_priors || i % 2 == s) priors.images.push_back(all_priors[i]);

        Rng rng(stage_seed(c.seed, "finetune-" + color));
        std::vector<double> losses;
        Checkpoint tuned = base;
        tuned.params = finetune(base.params, base.schedule, base.vocab, instances, priors, db, rng, &losses);
        save_checkpoint(dir / (color + ".ckpt"), tuned);
        write_meta(ctx, dir / (color + ".meta.json"), static_cast<std::int64_t>(losses.size()), tail_mean(losses, 10));
        write_file(dir / ("loss_" + color + ".csv"), loss_csv(losses));
        for (const std::string& f : {color + ".ckpt", color + ".meta.json", "loss_" + color + ".csv"})
            rec.output(dir / f);
        log("finetune: " + color + " subject, " + std::to_string(instances.images.size()) + " instances, " +
            std::to_string(priors.images.size()) + " priors, " + std::to_string(db.epochs) + " epochs");
    }
    rec.save();
}

void cmd_generate(const PipelineContext& ctx) {
    const RunConfig& c = ctx.config;
    RunRecord rec(ctx, "generate");
    const Checkpoint green = load_compatible(ctx, stage_dir(ctx, "finetune") / "green.ckpt", rec);
    const Checkpoint red = load_compatible(ctx, stage_dir(ctx, "finetune") / "red.ckpt", rec);
    const LatentCodec codec{c.codec_factor};
    const ColorCounts counts = balance_generation_counts(c.generate_total, c.green_weight, c.red_weight);

    DreamBoothConfig db = c.dreambooth;
    db.identifier = c.dreambooth.identifier.empty() ? select_pseudo_word(green.vocab) : c.dreambooth.identifier;
    const ConditionVector cond = embed_prompt(db.instance_prompt(), green.vocab);

    struct Job {
        const Checkpoint* model;
        std::string color;
        std::size_t index;
    };
    std::vector<Job> jobs;
    for (int i = 0; i < counts.green; ++i) jobs.push_back({&green, "green", static_cast<std::size_t>(i)});
    for (int i = 0; i < counts.red; ++i) jobs.push_back({&red, "red", static_cast<std::size_t>(i)});

    const fs::path dir = stage_dir(ctx, "generate");
    const std::uint64_t master = stage_seed(c.seed, "generate");
    const Shape shape = latent_shape(c);
    parallel_for(jobs.size(), c.jobs, [&](std::size_t k) {
        Rng rng = Rng::stream(master, k);
        const ImageTensor z = sample(jobs[k].model->params, jobs[k].model->schedule, cond, shape, rng);
        write_png(dir / "images" / (numbered(jobs[k].color, jobs[k].index) + ".png"), codec.decode(z));
    });
    DatasetManifest manifest;
    manifest.seed = c.seed;
    for (const auto& j : jobs) {
        const std::string rel = "images/" + numbered(j.color, j.index) + ".png";
        manifest.entries.push_back({rel, "", Split::train, j.color, Provenance::generated});
        rec.output(dir / rel);
    }
    write_manifest(dir / "manifest.jsonl", manifest);
    rec.output(dir / "manifest.jsonl");
    rec.save();
    log("generate: " + std::to_string(counts.green) + " green + " + std::to_string(counts.red) + " red images");
}

void cmd_annotate(const PipelineContext& ctx, AnnotateMode mode, const std::string& input) {
    const RunConfig& c = ctx.config;
    const std::string source = !input.empty() ? input : (mode == AnnotateMode::extract ? "generate" : "synth");
    const std::string mode_name =
        mode == AnnotateMode::encode_dots ? "encode-dots" : mode == AnnotateMode::encode_outlines ? "encode-outlines" : "extract";
    RunRecord rec(ctx, "annotate-" + mode_name);
    rec.arg("input", source);
    const DatasetManifest manifest = load_stage_manifest(ctx, source, rec);
    const fs::path in_dir = stage_dir(ctx, source);
    const fs::path dir = stage_dir(ctx, "annotate") / mode_name;

    DatasetManifest out;
    out.seed = c.seed;
    std::size_t total = 0;
    for (const auto& e : manifest.entries) {
        const fs::path image_path = in_dir / e.image;
        rec.input(image_path);
        const ImageTensor img = read_png(image_path);
        const std::string stem = fs::path(e.image).stem().string();
        if (mode == AnnotateMode::extract) {
            require(c.dots.annotation_channel < img.channels(), "annotation channel index exceeds image channels");
            const ImageTensor channel = model_to_channel_space(img.extract_channel(c.dots.annotation_channel));
            const auto centroids = extract_dots(channel, c.dots);
            ordered_json j;
            j["image"] = stem;
            j["width"] = img.width();
            j["height"] = img.height();
            j["centroids"] = ordered_json::array();
            for (const auto& p : centroids) j["centroids"].push_back({{"x", p.x}, {"y", p.y}});
            write_file(dir / (stem + ".json"), j.dump(2) + "\n");
            rec.output(dir / (stem + ".json"));
            out.entries.push_back({(image_path.lexically_relative(dir)).generic_string(), stem + ".json", e.split,
                                   e.color, e.provenance});
            total += centroids.size();
            continue;
        }
        if (e.annotation.empty()) continue;
        rec.input(in_dir / e.annotation);
        const ImageAnnotations ann = read_annotations_json(in_dir / e.annotation);
        const std::vector<BoundingBox> boxes = plain_boxes(ann);
        const ImageTensor raster = mode == AnnotateMode::encode_dots
                                       ? encode_dots(boxes, img.height(), img.width(), c.dots)
                                       : encode_outlines(boxes, img.height(), img.width(), c.dots);
        const ImageTensor parts[] = {img.extract_channel(0), img.extract_channel(1)};
        const ImageTensor merged = merge_annotation_channel(concat_channels(parts), channel_to_model_space(raster));
        write_png(dir / "images" / (stem + ".png"), merged);
        rec.output(dir / "images" / (stem + ".png"));
        out.entries.push_back({"images/" + stem + ".png", (in_dir / e.annotation).lexically_relative(dir).generic_string(),
                               e.split, e.color, e.provenance});
        total += boxes.size();
    }
    write_manifest(dir / "manifest.jsonl", out);
    rec.output(dir / "manifest.jsonl");
    rec.save();
    log("annotate " + mode_name + ": " + std::to_string(out.entries.size()) + " images, " + std::to_string(total) +
        (mode == AnnotateMode::extract ? " dots extracted" : " boxes encoded"));
}

void cmd_filter(const PipelineContext& ctx, const std::string& input) {
    const RunConfig& c = ctx.config;
    RunRecord rec(ctx, "filter");
    rec.arg("input", input);
    const DatasetManifest manifest = load_stage_manifest(ctx, input, rec);
    const fs::path in_dir = stage_dir(ctx, input);
    std::vector<ImageTensor> images;
    for (const auto& e : manifest.entries) {
        rec.input(in_dir / e.image);
        images.push_back(read_png(in_dir / e.image));
    }
    Rng rng(stage_seed(c.seed, "filter"));
    const FilterReport report = filter_largest_cluster(images, c.filter, rng);

    const fs::path dir = stage_dir(ctx, "filter");
    DatasetManifest kept;
    kept.seed = c.seed;
    for (std::size_t i : report.kept) {
        ManifestEntry e = manifest.entries[i];
        e.image = (in_dir / e.image).lexically_relative(dir).generic_string();
        if (!e.annotation.empty()) e.annotation = (in_dir / e.annotation).lexically_relative(dir).generic_string();
        kept.entries.push_back(std::move(e));
    }
    write_manifest(dir / "manifest.jsonl", kept);

    ordered_json j;
    j["input_count"] = images.size();
    j["kept_count"] = report.kept.size();
    j["largest_cluster"] = report.largest_cluster;
    j["cluster_sizes"] = report.cluster_sizes;
    j["pca_dims_used"] = report.pca_dims_used;
    j["perplexity_used"] = report.perplexity_used;
    j["initial_kl"] = report.initial_kl;
    j["final_kl"] = report.final_kl;
    j["labels"] = report.labels;
    ordered_json emb = ordered_json::array();
    for (std::size_t i = 0; i < report.embedding.rows; ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t d = 0; d < report.embedding.cols; ++d) row.push_back(report.embedding(i, d));
        emb.push_back(row);
    }
    j["embedding"] = emb;
    write_file(dir / "report.json", j.dump(2) + "\n");
    rec.output(dir / "manifest.jsonl");
    rec.output(dir / "report.json");
    rec.save();
    std::string sizes;
    for (std::size_t s : report.cluster_sizes) sizes += (sizes.empty() ? "" : "/") + std::to_string(s);
    log("filter: kept " + std::to_string(report.kept.size()) + " of " + std::to_string(images.size()) +
        " images (cluster sizes " + sizes + ")");
}

void cmd_detect(const PipelineContext& ctx, const std::string& input, const std::string& split) {
    const RunConfig& c = ctx.config;
    RunRecord rec(ctx, "detect");
    rec.arg("input", input);
    rec.arg("split", split);
    const DatasetManifest manifest = load_stage_manifest(ctx, input, rec);
    const fs::path in_dir = stage_dir(ctx, input);
    const fs::path dir = stage_dir(ctx, "detect");
    const bool all = split == "all";
    const Split wanted = all ? Split::train : split_from_string(split);

    DatasetManifest out;
    out.seed = c.seed;
    std::size_t total = 0;
    for (const auto& e : manifest.entries) {
        if (!all && e.split != wanted) continue;
        const fs::path image_path = in_dir / e.image;
        rec.input(image_path);
        const ImageTensor img = read_png(image_path);
        const std::string stem = fs::path(e.image).stem().string();
        const std::vector<Detection> dets = nms(detect_blobs(img, c.detector, stem), c.nms_iou);
        ImageAnnotations ann{stem, img.width(), img.height(), {}};
        for (const auto& d : dets) ann.boxes.push_back({d.box, d.confidence});
        write_annotations_json(dir / (stem + ".json"), ann);
        rec.output(dir / (stem + ".json"));
        out.entries.push_back({image_path.lexically_relative(dir).generic_string(), stem + ".json", e.split, e.color,
                               e.provenance});
        total += dets.size();
    }
    write_manifest(dir / "manifest.jsonl", out);
    rec.output(dir / "manifest.jsonl");
    rec.save();
    log("detect: " + std::to_string(total) + " detections on " + std::to_string(out.entries.size()) + " images");
}

void cmd_eval(const PipelineContext& ctx, const std::vector<fs::path>& detection_dirs, const fs::path& ground_truth) {
    RunRecord rec(ctx, "eval");
    const fs::path gt_path = ground_truth.empty() ? stage_dir(ctx, "synth") / "manifest.jsonl" : ground_truth;
    rec.input(require_file(gt_path, "ground-truth manifest"));
    const DatasetManifest gt_manifest = read_manifest(gt_path);
    std::map<std::string, fs::path> gt_by_stem;
    for (const auto& e : gt_manifest.entries)
        if (!e.annotation.empty())
            gt_by_stem[fs::path(e.image).stem().string()] = gt_path.parent_path() / e.annotation;

    std::vector<fs::path> dirs = detection_dirs;
    if (dirs.empty()) dirs.push_back(stage_dir(ctx, "detect"));

    std::vector<APReport> reports;
    ordered_json runs = ordered_json::array();
    std::string text;
    for (const auto& d : dirs) {
        const fs::path mpath = require_file(d / "manifest.jsonl", "detection manifest");
        rec.input(mpath);
        const DatasetManifest dm = read_manifest(mpath);
        std::vector<Detection> dets;
        std::vector<GroundTruth> gts;
        std::vector<std::string> missing;
        for (const auto& e : dm.entries) {
            rec.input(d / e.annotation);
            const std::string stem = fs::path(e.image).stem().string();
            auto it = gt_by_stem.find(stem);
            if (it == gt_by_stem.end()) {
                missing.push_back((d / e.annotation).string());
                continue;
            }
            rec.input(it->second);
            const ImageAnnotations gt = read_annotations_json(it->second);
            // YOLO files carry no image size; take it from the ground truth.
            const ImageAnnotations det =
                fs::path(e.annotation).extension() == ".txt"
                    ? annotations_from_yolo(read_file(d / e.annotation), stem, gt.width, gt.height, {"apple"},
                                            (d / e.annotation).string())
                    : read_annotations_json(d / e.annotation);
            for (const auto& b : det.boxes) dets.push_back({b.box, b.confidence.value_or(1.0), stem});
            for (const auto& b : gt.boxes) gts.push_back({b.box, stem});
        }
        if (!missing.empty()) {
            std::string msg = "eval: no ground truth for";
            for (const auto& m : missing) msg += "\n  " + m;
            fail_validation(msg);
        }
        const APReport r = coco_ap(dets, gts);
        reports.push_back(r);
        ordered_json jr;
        jr["detections"] = d.lexically_relative(ctx.out).generic_string();
        jr["images"] = dm.entries.size();
        jr["ground_truth_boxes"] = gts.size();
        jr["detections_count"] = dets.size();
        jr["ap_coco"] = r.ap_coco;
        jr["ap50"] = r.ap50;
        jr["ap75"] = r.ap75;
        ordered_json by = ordered_json::object();
        for (const auto& [t, ap] : r.ap_by_threshold) {
            char key[16];
            std::snprintf(key, sizeof key, "%.2f", t);
            by[key] = ap;
        }
        jr["ap_by_threshold"] = by;
        runs.push_back(jr);
        text += "run " + d.lexically_relative(ctx.out).generic_string() + "\n" + format_report(r);
    }
    const auto summary = aggregate_runs(reports);
    ordered_json agg = ordered_json::array();
    for (const auto& m : summary) agg.push_back({{"metric", m.name}, {"mean", m.mean}, {"std", m.stddev}});
    ordered_json j;
    j["runs"] = runs;
    j["aggregate"] = agg;
    text += "aggregate over " + std::to_string(reports.size()) + " run(s)\n" + format_summary(summary);

    const fs::path dir = stage_dir(ctx, "eval");
    write_file(dir / "report.json", j.dump(2) + "\n");
    write_file(dir / "report.txt", text);
    rec.output(dir / "report.json");
    rec.output(dir / "report.txt");
    rec.save();
    std::cerr << text;
}

bool cmd_gradcheck(const PipelineContext& ctx) {
    const std::uint64_t seed = stage_seed(ctx.config.seed, "gradcheck");
    Rng rng(seed);
    const DenoiserConfig dc{.latent_channels = 1, .features = 4, .time_dim = 4, .cond_dim = 4};
    const DenoiserParams params = init_params(dc, rng);
    const DiffusionSchedule sched = build_schedule(20, 1e-3, 0.2);
    const PromptVocabulary vocab = PromptVocabulary::create_default(dc.cond_dim, seed + 1);
    auto random_item = [&](const std::vector<std::string>& prompt) {
        ImageTensor z(1, 4, 4);
        for (double& v : z.values()) v = rng.uniform(-1.0, 1.0);
        return TrainingItem{z, static_cast<int>(rng.uniform_int(1, sched.steps)), embed_prompt(prompt, vocab)};
    };
    const std::vector<TrainingItem> batch{random_item({"a", "tree"}), random_item({"a", "sks", "tree"})};
    const TrainingItem instance = random_item({"a", "sks", "tree"});
    const TrainingItem prior = random_item({"a", "tree"});
    constexpr double kTolerance = 1e-4;

    bool ok = true;
    auto run = [&](const std::string& label, const LossFunction& fn) {
        for (const auto& e : gradient_check(params, fn)) {
            char buf[128];
            const bool pass = e.max_rel_error < kTolerance;
            ok = ok && pass;
            std::snprintf(buf, sizeof buf, "%-10s %-18s max rel err %.3e  %s", label.c_str(), e.tensor.c_str(),
                          e.max_rel_error, pass ? "ok" : "FAIL");
            log(buf);
        }
    };
    run("ddpm", [&](const DenoiserParams& p) {
        Rng r(seed + 2);
        return loss_and_grads(p, sched, batch, r);
    });
    run("dreambooth", [&](const DenoiserParams& p) {
        Rng r(seed + 3);
        return dreambooth_loss(p, sched, instance, prior, 1.0, r);
    });
    log(ok ? "gradcheck: PASS" : "gradcheck: FAIL");
    return ok;
}

}  // namespace genfusion
