// Command-line front end: synth, train, infer, eval, bench.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "dpdnet/dpdnet.hpp"

namespace fs = std::filesystem;
using namespace dpdnet;

namespace {

// Config files share the manifest header syntax: one line of key=value pairs
// after the "config v1" prefix. Flags take precedence over file values.
std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open config file " + path);
    std::map<std::string, std::string> kv;
    std::string word;
    is >> word;
    require(word == "config", "bad config header in " + path);
    is >> word;
    require(word == "v1", "unsupported config version in " + path);
    while (is >> word) {
        auto eq = word.find('=');
        require(eq != std::string::npos, "bad config field '" + word + "' in " + path);
        kv[word.substr(0, eq)] = word.substr(eq + 1);
    }
    return kv;
}

// Precedence: flags > config file > defaults.
void apply_train_config(CLI::App* cmd, const std::map<std::string, std::string>& kv,
                        TrainConfig& tc, uint64_t& seed, std::string& variant_str) {
    auto use = [&](const char* flag, const char* key) {
        return cmd->count(flag) == 0 && kv.count(key) > 0;
    };
    if (use("--epochs", "epochs")) tc.epochs = std::stoi(kv.at("epochs"));
    if (use("--lr", "lr")) tc.lr = std::stod(kv.at("lr"));
    if (use("--lambda", "lambda")) tc.lambda = std::stod(kv.at("lambda"));
    if (use("--batch", "batch")) tc.batch_size = std::stoi(kv.at("batch"));
    if (use("--filter-scale", "filter_scale")) tc.filter_scale = std::stod(kv.at("filter_scale"));
    if (use("--val-fraction", "val_fraction")) tc.validation_fraction = std::stod(kv.at("val_fraction"));
    if (use("--seed", "seed")) seed = std::stoull(kv.at("seed"));
    if (use("--variant", "variant")) variant_str = kv.at("variant");
}

std::pair<int, int> parse_range(const std::string& s) {
    auto dots = s.find("..");
    if (dots == std::string::npos) {
        int v = std::stoi(s);
        return {v, v};
    }
    return {std::stoi(s.substr(0, dots)), std::stoi(s.substr(dots + 2))};
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open " + path + " for writing");
    os << content;
    require(os.good(), "I/O failure writing " + path);
}

struct DetectionRow {
    int frame;
    Detection det;
};

std::string detections_csv(const std::vector<DetectionRow>& rows) {
    std::ostringstream os;
    os << "frame,row,col,score\n";
    for (const auto& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.4f\n", r.frame, r.det.row, r.det.col,
                      r.det.score);
        os << buf;
    }
    return os.str();
}

std::vector<std::vector<Detection>> read_detections_csv(const std::string& path, size_t n_frames) {
    std::ifstream is(path);
    require(is.good(), "cannot open detections file " + path);
    std::string line;
    require(bool(std::getline(is, line)), "empty detections file " + path);
    require(line == "frame,row,col,score", "unexpected detections header in " + path);
    std::vector<std::vector<Detection>> by_frame(n_frames);
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        int frame, row, col;
        double score;
        require(std::sscanf(line.c_str(), "%d,%d,%d,%lf", &frame, &row, &col, &score) == 4,
                "malformed detections line: " + line);
        require(frame >= 0 && size_t(frame) < n_frames,
                "detections reference frame " + std::to_string(frame) + " but the manifest has " +
                    std::to_string(n_frames) + " frames");
        by_frame[size_t(frame)].push_back({row, col, score});
    }
    return by_frame;
}

// Match radius defaults to 2*sigma at the native resolution (12 px at 212 rows).
double default_match_radius(int native_h) { return 12.0 * double(native_h) / 212.0; }

int cmd_synth(const std::string& out_dir, int frames, const std::string& people,
              double chairs, double noise, int height, int width, uint64_t seed) {
    SceneConfig cfg;
    cfg.height = height;
    cfg.width = width;
    auto [lo, hi] = parse_range(people);
    cfg.min_people = lo;
    cfg.max_people = hi;
    cfg.chair_probability = chairs;
    cfg.noise_sigma_mm = noise;
    auto manifest = generate_dataset(cfg, frames, seed, out_dir);
    std::map<std::string, int> by_cond;
    size_t heads = 0;
    for (const auto& r : manifest.records) {
        by_cond[r.condition]++;
        heads += r.heads.size();
    }
    std::cout << (fs::path(out_dir) / "manifest.txt").string() << "\n";
    std::cout << "frames: " << manifest.records.size() << ", heads: " << heads << "\n";
    for (auto& [c, n] : by_cond) std::cout << "  " << c << ": " << n << "\n";
    return 0;
}

int cmd_train(const std::string& manifest_path, const std::string& out_dir, TrainConfig cfg) {
    fs::create_directories(out_dir);
    auto manifest = load_manifest(manifest_path);
    auto frames = prepare_frames(manifest, cfg.variant);
    auto samples = make_train_samples(frames, cfg.variant);
    std::cout << "training on " << samples.size() << " frames (" << variant_name(cfg.variant)
              << " variant, filter scale " << cfg.filter_scale << ")\n";
    auto result = train(samples, cfg, [&](int epoch, const EpochStats& st) {
        std::printf("epoch %d/%d  train %.4f  val %.4f  (%.1fs)\n", epoch + 1, cfg.epochs,
                    st.train_loss, st.val_loss, st.seconds);
        std::fflush(stdout);
    });
    auto ckpt = (fs::path(out_dir) / "checkpoint.dpdn").string();
    save_checkpoint(result.model, ckpt);
    write_text((fs::path(out_dir) / "train_record.csv").string(), result.record.csv());
    std::cout << "best epoch: " << result.record.best_epoch + 1 << "\ncheckpoint: " << ckpt << "\n";
    return 0;
}

int cmd_infer(const std::string& manifest_path, const std::string& ckpt_path,
              const std::string& out_dir, double tau, bool emit_maps) {
    fs::create_directories(out_dir);
    auto model = load_checkpoint<float>(ckpt_path);
    auto manifest = load_manifest(manifest_path);
    auto frames = prepare_frames(manifest, model.variant());
    DecodeConfig dc;
    dc.tau = tau;
    std::vector<DetectionRow> rows;
    for (size_t i = 0; i < frames.size(); ++i) {
        auto r = infer_frame(model, frames[i].input, dc);
        auto native = rescale_detections(r.detections, model.input_height(), model.input_width(),
                                         manifest.height, manifest.width);
        for (const auto& d : native) rows.push_back({int(i), d});
        if (emit_maps) {
            fs::create_directories(fs::path(out_dir) / "maps");
            char name[48];
            std::snprintf(name, sizeof(name), "maps/frame_%05zu.pgm", i);
            write_confmap_pgm(r.refined_map, (fs::path(out_dir) / name).string());
        }
    }
    auto det_path = (fs::path(out_dir) / "detections.csv").string();
    write_text(det_path, detections_csv(rows));
    std::cout << det_path << "\n" << rows.size() << " detections over " << frames.size()
              << " frames\n";
    return 0;
}

int cmd_eval(const std::string& manifest_path, const std::string& det_path,
             const std::string& out_dir, double match_radius) {
    fs::create_directories(out_dir);
    auto manifest = load_manifest(manifest_path);
    auto by_frame = read_detections_csv(det_path, manifest.records.size());
    MatchConfig mc;
    mc.radius = match_radius > 0 ? match_radius : default_match_radius(manifest.height);
    std::vector<std::string> conditions;
    std::vector<CountTally> tallies;
    for (size_t i = 0; i < manifest.records.size(); ++i) {
        conditions.push_back(manifest.records[i].condition);
        tallies.push_back(match_frame(by_frame[i], manifest.records[i].heads, mc));
    }
    auto rows = evaluate_conditions(conditions, tallies);
    write_text((fs::path(out_dir) / "metrics.csv").string(), metrics_csv(rows));
    auto table = metrics_table(rows);
    write_text((fs::path(out_dir) / "metrics.txt").string(), table);
    std::cout << table;
    return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& manifest_path, int frames,
              int warmup, uint64_t seed) {
    auto model = load_checkpoint<float>(ckpt_path);
    DecodeConfig dc;
    struct Stream {
        std::string condition;
        std::vector<TensorT<float>> inputs;
    };
    std::vector<Stream> streams;
    if (!manifest_path.empty()) {
        auto manifest = load_manifest(manifest_path);
        auto prepared = prepare_frames(manifest, model.variant());
        std::map<std::string, Stream> by_cond;
        for (auto& f : prepared) {
            by_cond[f.condition].condition = f.condition;
            by_cond[f.condition].inputs.push_back(f.input);
        }
        for (auto& [c, s] : by_cond) streams.push_back(std::move(s));
    } else {
        for (auto [cond, people] : {std::pair<const char*, int>{"single", 1}, {"two", 2}, {"multi", 5}}) {
            SceneConfig cfg;
            cfg.min_people = cfg.max_people = people;
            Stream s;
            s.condition = cond;
            for (int i = 0; i < frames; ++i) {
                auto scene = generate_scene(cfg, derive_seed(seed, std::string(cond) + std::to_string(i)));
                s.inputs.push_back(prepare_input<float>(scene.frame, model.input_height(),
                                                        model.input_width(), cfg.max_depth_mm));
            }
            streams.push_back(std::move(s));
        }
    }
    std::printf("%-22s %10s %10s %10s %10s\n", "Condition", "mean FPS", "mean ms", "min ms", "max ms");
    for (auto& s : streams) {
        if (int(s.inputs.size()) <= warmup) continue;
        auto rep = benchmark_fps(
            [&](int i) { infer_frame(model, s.inputs[size_t(i) % s.inputs.size()], dc); },
            int(s.inputs.size()), warmup);
        std::printf("%-22s %10.2f %10.2f %10.2f %10.2f\n", s.condition.c_str(), rep.mean_fps,
                    rep.mean_ms, rep.min_ms, rep.max_ms);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Overhead-depth people detector: synthesize data, train, infer, evaluate, benchmark"};
    app.require_subcommand(1);

    std::string config_path, manifest, checkpoint, out_dir = ".", detections, variant_str = "std";
    std::string people = "1..4";
    int frames = 32, height = 212, width = 256, warmup = 3;
    double chairs = 0.0, noise = 20.0, tau = 0.5, match_radius = 0.0;
    uint64_t seed = 0;
    bool emit_maps = false, deterministic = false;
    TrainConfig tc;

    auto* synth = app.add_subcommand("synth", "generate a synthetic overhead-depth dataset");
    synth->add_option("--out", out_dir, "output directory")->required();
    synth->add_option("--frames", frames, "number of frames");
    synth->add_option("--people", people, "people per frame, N or A..B");
    synth->add_option("--chairs", chairs, "probability of a chair per frame");
    synth->add_option("--noise", noise, "depth noise sigma in mm");
    synth->add_option("--height", height, "frame height");
    synth->add_option("--width", width, "frame width");
    synth->add_option("--seed", seed, "random seed");

    auto* train_cmd = app.add_subcommand("train", "train a model on a manifest");
    train_cmd->add_option("--manifest", manifest, "dataset manifest")->required();
    train_cmd->add_option("--out", out_dir, "output directory");
    train_cmd->add_option("--config", config_path, "config file (flags take precedence)");
    train_cmd->add_option("--variant", variant_str, "std or fast");
    train_cmd->add_option("--epochs", tc.epochs, "training epochs");
    train_cmd->add_option("--lr", tc.lr, "initial learning rate");
    train_cmd->add_option("--lambda", tc.lambda, "main-block loss weight");
    train_cmd->add_option("--batch", tc.batch_size, "batch size");
    train_cmd->add_option("--filter-scale", tc.filter_scale, "uniform channel multiplier");
    train_cmd->add_option("--val-fraction", tc.validation_fraction, "validation split fraction");
    train_cmd->add_option("--seed", seed, "random seed");
    train_cmd->add_flag("--deterministic", deterministic, "serialized reductions, reproducible runs");

    auto* infer = app.add_subcommand("infer", "run detection over a manifest");
    infer->add_option("--manifest", manifest, "dataset manifest")->required();
    infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    infer->add_option("--out", out_dir, "output directory");
    infer->add_option("--tau", tau, "detection threshold");
    infer->add_flag("--emit-maps", emit_maps, "write refined confidence maps as PGM");
    infer->add_flag("--deterministic", deterministic, "serialized reductions, reproducible runs");

    auto* eval = app.add_subcommand("eval", "score detections against manifest ground truth");
    eval->add_option("--manifest", manifest, "dataset manifest")->required();
    eval->add_option("--detections", detections, "detections CSV from infer")->required();
    eval->add_option("--out", out_dir, "output directory");
    eval->add_option("--match-radius", match_radius, "TP match radius in native pixels");
    eval->add_flag("--deterministic", deterministic, "serialized reductions, reproducible runs");

    auto* bench = app.add_subcommand("bench", "measure inference throughput");
    bench->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    bench->add_option("--manifest", manifest, "optional manifest; synthetic streams otherwise");
    bench->add_option("--frames", frames, "frames per condition (synthetic mode)");
    bench->add_option("--warmup", warmup, "untimed warmup frames");
    bench->add_option("--seed", seed, "random seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*synth) return cmd_synth(out_dir, frames, people, chairs, noise, height, width, seed);
        if (*train_cmd) {
            if (!config_path.empty())
                apply_train_config(train_cmd, load_config_file(config_path), tc, seed, variant_str);
            tc.seed = seed;
            tc.variant = parse_variant(variant_str);
            return cmd_train(manifest, out_dir, tc);
        }
        if (*infer) return cmd_infer(manifest, checkpoint, out_dir, tau, emit_maps);
        if (*eval) return cmd_eval(manifest, detections, out_dir, match_radius);
        if (*bench) return cmd_bench(checkpoint, manifest, frames, warmup, seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
