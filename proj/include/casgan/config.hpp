#ifndef CASGAN_CONFIG_HPP
#define CASGAN_CONFIG_HPP

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "casgan/common.hpp"

namespace casgan {

enum class AdvLossForm { LeastSquares, VanillaLog };

inline std::string to_string(AdvLossForm f) {
    return f == AdvLossForm::LeastSquares ? "least-squares" : "vanilla-log";
}

inline AdvLossForm adv_loss_form_from_string(const std::string& s) {
    if (s == "least-squares")
        return AdvLossForm::LeastSquares;
    if (s == "vanilla-log")
        return AdvLossForm::VanillaLog;
    throw config_error("adv_loss_form must be 'least-squares' or 'vanilla-log', got '" + s + "'");
}

// Single source of truth for hyperparameters, shapes, paths and seeds.
// Immutable after load_config; shared freely across threads.
struct RunConfig {
    int image_channels = 1;  // C; X-ray frames are grayscale
    int image_size = 64;     // H = W; paper runs 256, desk default 64
    int downsample_ratio = 4;
    int latent_channels = 64; // C'; paper 256, desk default 64

    double lambda1 = 0.5;  // semantic adversarial
    double lambda2 = 10.0; // image cycle
    double lambda3 = 1.0;  // latent cycle
    double lambda4 = 1.0;  // predictor
    double lambda5 = 0.5;  // reconstruction

    AdvLossForm adv_loss_form = AdvLossForm::LeastSquares;

    double lr0 = 2e-4;
    int epochs_total = 1000;
    int epochs_constant = 700;
    int batch_size = 1;
    std::uint64_t seed = 0;
    int buffer_size = 50;

    std::string dataset_root = "data";
    std::string checkpoint_dir = "checkpoints";
    std::string output_dir = "out";

    // Architecture and optimizer knobs beyond the core hyperparameters.
    // 0 means "derive from image_size / latent_channels".
    int n_res_encoder = 0;
    int n_res_decoder = 0;
    int disc_layers = 0; // stride-2 layers in the patch discriminators
    int disc_width = 0;  // first discriminator width
    int seg_depth = 4;
    int seg_base_width = 16;
    int feature_dim = 64; // metric extractor feature dimension
    int checkpoint_every = 100;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    bool flip_augment = true;

    // Derived stream seeds: parameter init, data shuffling, synthetic data.
    std::uint64_t seed_init() const { return seed; }
    std::uint64_t seed_data() const { return seed + 1; }
    std::uint64_t seed_synth() const { return seed + 2; }

    int resolved_res_encoder() const {
        if (n_res_encoder > 0)
            return n_res_encoder;
        return image_size >= 256 ? 5 : 3;
    }
    int resolved_res_decoder() const {
        if (n_res_decoder > 0)
            return n_res_decoder;
        return image_size >= 256 ? 4 : 3;
    }
    int resolved_disc_layers() const { return disc_layers > 0 ? disc_layers : 3; }
    int resolved_disc_width() const {
        return disc_width > 0 ? disc_width : std::max(4, latent_channels / 4);
    }
    int num_downsamples() const {
        int r = downsample_ratio, n = 0;
        while (r > 1) {
            r /= 2;
            ++n;
        }
        return n;
    }
};

namespace detail {

inline bool is_power_of_two(int v) { return v >= 1 && (v & (v - 1)) == 0; }

inline void validate(const RunConfig& c) {
    auto fail = [](const std::string& msg) { throw config_error("config validation: " + msg); };
    if (c.image_channels < 1)
        fail("image_channels must be positive");
    if (c.image_size < 8)
        fail("image_size must be at least 8");
    if (c.image_size % 4 != 0)
        fail("image_size not divisible by 4");
    if (!is_power_of_two(c.downsample_ratio))
        fail("downsample_ratio must be a power of two");
    if (c.image_size % c.downsample_ratio != 0)
        fail("image_size not divisible by r");
    if (c.latent_channels < 4 || c.latent_channels % 4 != 0)
        fail("latent_channels must be divisible by 4 (predictor bottleneck C'/4)");
    if (c.latent_channels % c.downsample_ratio != 0)
        fail("latent_channels must be divisible by downsample_ratio");
    if (c.lambda1 < 0 || c.lambda2 < 0 || c.lambda3 < 0 || c.lambda4 < 0 || c.lambda5 < 0)
        fail("lambda weights must be non-negative");
    if (c.lr0 <= 0)
        fail("lr0 must be positive");
    if (c.epochs_total < 0)
        fail("epochs_total must be non-negative");
    if (c.epochs_constant > c.epochs_total)
        fail("epochs_constant exceeds epochs_total");
    if (c.batch_size < 1)
        fail("batch_size must be positive");
    if (c.buffer_size < 0)
        fail("buffer_size must be non-negative");
    if (c.seg_depth < 1)
        fail("seg_depth must be positive");
    if (c.image_size % (1 << (c.seg_depth - 1)) != 0)
        fail("image_size not divisible by 2^(seg_depth-1) required by the segmenter");
    if (c.seg_base_width < 1)
        fail("seg_base_width must be positive");
    if (c.feature_dim < 4 || c.feature_dim % 4 != 0)
        fail("feature_dim must be divisible by 4");
    if (c.checkpoint_every < 1)
        fail("checkpoint_every must be positive");
}

} // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["image_channels"] = c.image_channels;
    j["image_size"] = c.image_size;
    j["downsample_ratio"] = c.downsample_ratio;
    j["latent_channels"] = c.latent_channels;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["lambda3"] = c.lambda3;
    j["lambda4"] = c.lambda4;
    j["lambda5"] = c.lambda5;
    j["adv_loss_form"] = to_string(c.adv_loss_form);
    j["lr0"] = c.lr0;
    j["epochs_total"] = c.epochs_total;
    j["epochs_constant"] = c.epochs_constant;
    j["batch_size"] = c.batch_size;
    j["seed"] = c.seed;
    j["buffer_size"] = c.buffer_size;
    j["paths"] = {{"dataset_root", c.dataset_root},
                  {"checkpoint_dir", c.checkpoint_dir},
                  {"output_dir", c.output_dir}};
    j["n_res_encoder"] = c.n_res_encoder;
    j["n_res_decoder"] = c.n_res_decoder;
    j["disc_layers"] = c.disc_layers;
    j["disc_width"] = c.disc_width;
    j["seg_depth"] = c.seg_depth;
    j["seg_base_width"] = c.seg_base_width;
    j["feature_dim"] = c.feature_dim;
    j["checkpoint_every"] = c.checkpoint_every;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["flip_augment"] = c.flip_augment;
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    RunConfig c;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key))
            field = j.at(key).template get<std::decay_t<decltype(field)>>();
    };
    get("image_channels", c.image_channels);
    get("image_size", c.image_size);
    get("downsample_ratio", c.downsample_ratio);
    get("latent_channels", c.latent_channels);
    get("lambda1", c.lambda1);
    get("lambda2", c.lambda2);
    get("lambda3", c.lambda3);
    get("lambda4", c.lambda4);
    get("lambda5", c.lambda5);
    if (j.contains("adv_loss_form"))
        c.adv_loss_form = adv_loss_form_from_string(j.at("adv_loss_form").get<std::string>());
    get("lr0", c.lr0);
    get("epochs_total", c.epochs_total);
    get("epochs_constant", c.epochs_constant);
    get("batch_size", c.batch_size);
    get("seed", c.seed);
    get("buffer_size", c.buffer_size);
    if (j.contains("paths")) {
        const auto& p = j.at("paths");
        if (p.contains("dataset_root"))
            c.dataset_root = p.at("dataset_root").get<std::string>();
        if (p.contains("checkpoint_dir"))
            c.checkpoint_dir = p.at("checkpoint_dir").get<std::string>();
        if (p.contains("output_dir"))
            c.output_dir = p.at("output_dir").get<std::string>();
    }
    get("n_res_encoder", c.n_res_encoder);
    get("n_res_decoder", c.n_res_decoder);
    get("disc_layers", c.disc_layers);
    get("disc_width", c.disc_width);
    get("seg_depth", c.seg_depth);
    get("seg_base_width", c.seg_base_width);
    get("feature_dim", c.feature_dim);
    get("checkpoint_every", c.checkpoint_every);
    get("adam_beta1", c.adam_beta1);
    get("adam_beta2", c.adam_beta2);
    get("adam_eps", c.adam_eps);
    get("flip_augment", c.flip_augment);

    static const char* known[] = {
        "image_channels", "image_size",    "downsample_ratio", "latent_channels",
        "lambda1",        "lambda2",       "lambda3",          "lambda4",
        "lambda5",        "adv_loss_form", "lr0",              "epochs_total",
        "epochs_constant", "batch_size",   "seed",             "buffer_size",
        "paths",          "n_res_encoder", "n_res_decoder",    "disc_layers",
        "disc_width",     "seg_depth",     "seg_base_width",   "feature_dim",
        "checkpoint_every", "adam_beta1",  "adam_beta2",       "adam_eps",
        "flip_augment"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k)
                ok = true;
        if (!ok)
            throw config_error("unknown config key '" + it.key() + "'");
    }
    detail::validate(c);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw config_error("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();

    // An empty (or whitespace-only) file means "all defaults".
    if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
        RunConfig c;
        detail::validate(c);
        return c;
    }

    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        std::size_t line = 1;
        for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
            if (text[i] == '\n')
                ++line;
        throw config_error(format_msg("config parse error in '", path, "' at line ", line, ": ",
                                      e.what()));
    }
    if (!j.is_object())
        throw config_error("config file '" + path + "' must contain a JSON object");
    return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw io_error("cannot write config file '" + path + "'");
    out << config_to_json(c).dump(2) << "\n";
}

} // namespace casgan

#endif
