#include "univip/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace univip {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

long parse_long(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long out = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw UsageError("config: " + key + ": not an integer: '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        unsigned long long out = std::stoull(v, &pos);
        if (pos != v.size() || (!v.empty() && v[0] == '-')) throw std::invalid_argument("bad");
        return static_cast<uint64_t>(out);
    } catch (const std::exception&) {
        throw UsageError("config: " + key + ": not a non-negative integer: '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("trailing");
        return out;
    } catch (const std::exception&) {
        throw UsageError("config: " + key + ": not a number: '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    std::string s = v;
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "off" || s == "no") return false;
    throw UsageError("config: " + key + ": not a boolean: '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) throw UsageError("config: " + key + ": empty list element");
        long x = parse_long(key, item);
        if (x < 1) throw UsageError("config: " + key + ": channel counts must be >= 1");
        out.push_back(static_cast<std::size_t>(x));
    }
    if (out.empty()) throw UsageError("config: " + key + ": empty list");
    return out;
}

std::string join_ints(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace

TrainConfig default_config(const std::string& profile) {
    TrainConfig cfg;
    cfg.profile = profile;
    if (profile == "desk") {
        cfg.proposals.filter.min_scale = 16;
        return cfg; // struct defaults are the desk profile
    }
    if (profile == "paper") {
        cfg.views.scene_size = 224;
        cfg.views.instance_size = 96;
        cfg.views.min_scale = 64;
        cfg.proposals.segment.sigma = 0.0;
        cfg.proposals.segment.min_size = 100;
        cfg.proposals.filter.min_scale = 64;
        cfg.scene.canvas = 224;
        cfg.scene.min_side = 68;
        cfg.scene.max_side = 140;
        return cfg;
    }
    throw UsageError("config: unknown profile '" + profile + "' (desk or paper)");
}

void apply_kv(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const std::string& k = key;
    const std::string& v = value;
    if (k == "profile") {
        // consumed by the loaders before anything else; reaching here means a
        // bare apply after defaults were already fixed
        throw UsageError("config: profile can only be set before other keys");
    }

    if (k == "train.manifest") { cfg.manifest = v; return; }
    if (k == "train.out_dir") { cfg.out_dir = v; return; }
    if (k == "train.epochs") { cfg.epochs = parse_long(k, v); return; }
    if (k == "train.warmup_epochs") { cfg.warmup_epochs = parse_long(k, v); return; }
    if (k == "train.batch_size") { cfg.batch_size = parse_long(k, v); return; }
    if (k == "train.base_lr") { cfg.base_lr = parse_double(k, v); return; }
    if (k == "train.weight_decay") { cfg.weight_decay = parse_double(k, v); return; }
    if (k == "train.momentum") { cfg.sgd_momentum = parse_double(k, v); return; }
    if (k == "train.m0") { cfg.m0 = parse_double(k, v); return; }
    if (k == "train.seed") { cfg.seed = parse_u64(k, v); return; }
    if (k == "train.threads") { cfg.threads = static_cast<int>(parse_long(k, v)); return; }
    if (k == "train.scene_loss") { cfg.switches.scene = parse_bool(k, v); return; }
    if (k == "train.scene_instance_loss") { cfg.switches.scene_instance = parse_bool(k, v); return; }
    if (k == "train.instance_loss") { cfg.switches.instance = parse_bool(k, v); return; }

    if (k == "model.feat_dim") { cfg.dims.feat_dim = static_cast<int>(parse_long(k, v)); return; }
    if (k == "model.hidden") { cfg.dims.hidden = static_cast<int>(parse_long(k, v)); return; }
    if (k == "model.d") { cfg.dims.d = static_cast<int>(parse_long(k, v)); return; }
    if (k == "model.conv_channels") { cfg.dims.conv_channels = parse_size_list(k, v); return; }

    if (k == "views.scene_size") { cfg.views.scene_size = static_cast<int>(parse_long(k, v)); return; }
    if (k == "views.instance_size") { cfg.views.instance_size = static_cast<int>(parse_long(k, v)); return; }
    if (k == "views.k") {
        cfg.views.K = static_cast<int>(parse_long(k, v));
        cfg.dims.k = cfg.views.K;
        return;
    }
    if (k == "views.iters") { cfg.views.iters = static_cast<int>(parse_long(k, v)); return; }
    if (k == "views.min_scale") { cfg.views.min_scale = static_cast<int>(parse_long(k, v)); return; }
    if (k == "views.area_min") { cfg.views.area_min = parse_double(k, v); return; }
    if (k == "views.area_max") { cfg.views.area_max = parse_double(k, v); return; }
    if (k == "views.ratio_min") { cfg.views.ratio_min = parse_double(k, v); return; }
    if (k == "views.ratio_max") { cfg.views.ratio_max = parse_double(k, v); return; }

    if (k == "proposals.sigma") { cfg.proposals.segment.sigma = parse_double(k, v); return; }
    if (k == "proposals.k") { cfg.proposals.segment.k = parse_double(k, v); return; }
    if (k == "proposals.min_size") { cfg.proposals.segment.min_size = static_cast<int>(parse_long(k, v)); return; }
    if (k == "proposals.min_scale") { cfg.proposals.filter.min_scale = static_cast<int>(parse_long(k, v)); return; }
    if (k == "proposals.ar_min") { cfg.proposals.filter.ar_min = parse_double(k, v); return; }
    if (k == "proposals.ar_max") { cfg.proposals.filter.ar_max = parse_double(k, v); return; }
    if (k == "proposals.max_iou") { cfg.proposals.filter.max_iou = parse_double(k, v); return; }
    if (k == "proposals.max_proposals") { cfg.proposals.max_proposals = static_cast<int>(parse_long(k, v)); return; }

    if (k == "sinkhorn.epsilon") { cfg.sinkhorn.epsilon = parse_double(k, v); return; }
    if (k == "sinkhorn.max_iter") { cfg.sinkhorn.max_iter = static_cast<int>(parse_long(k, v)); return; }
    if (k == "sinkhorn.tol") { cfg.sinkhorn.tol = parse_double(k, v); return; }

    if (k == "data.canvas") { cfg.scene.canvas = static_cast<int>(parse_long(k, v)); return; }
    if (k == "data.min_shapes") { cfg.scene.min_shapes = static_cast<int>(parse_long(k, v)); return; }
    if (k == "data.max_shapes") { cfg.scene.max_shapes = static_cast<int>(parse_long(k, v)); return; }
    if (k == "data.min_side") { cfg.scene.min_side = static_cast<int>(parse_long(k, v)); return; }
    if (k == "data.max_side") { cfg.scene.max_side = static_cast<int>(parse_long(k, v)); return; }
    if (k == "data.max_place_iou") { cfg.scene.max_place_iou = parse_double(k, v); return; }
    if (k == "data.supersample") { cfg.scene.supersample = static_cast<int>(parse_long(k, v)); return; }
    if (k == "data.count") { cfg.scene_count = parse_long(k, v); return; }

    throw UsageError("config: unknown key '" + k + "'");
}

namespace {

struct KvList {
    std::vector<std::pair<std::string, std::string>> items;
    std::string profile; // empty = not set
};

KvList scan_ini(const std::string& text) {
    KvList out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[') {
            if (s.back() != ']' || s.size() < 3) {
                throw UsageError("config: malformed section header at line " +
                                 std::to_string(lineno));
            }
            section = trim(s.substr(1, s.size() - 2));
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos) {
            throw UsageError("config: expected key = value at line " + std::to_string(lineno));
        }
        std::string key = trim(s.substr(0, eq));
        std::string val = trim(s.substr(eq + 1));
        if (key.empty()) {
            throw UsageError("config: empty key at line " + std::to_string(lineno));
        }
        std::string full = section.empty() ? key : section + "." + key;
        if (full == "profile" || full == "train.profile") {
            out.profile = val;
            continue;
        }
        out.items.emplace_back(full, val);
    }
    return out;
}

} // namespace

TrainConfig parse_config_text(const std::string& text,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    KvList file = scan_ini(text);
    std::string profile = file.profile.empty() ? "desk" : file.profile;
    std::vector<std::pair<std::string, std::string>> rest;
    for (const auto& [k, v] : overrides) {
        if (k == "profile" || k == "train.profile") {
            profile = v;
        } else {
            rest.emplace_back(k, v);
        }
    }
    TrainConfig cfg = default_config(profile);
    for (const auto& [k, v] : file.items) apply_kv(cfg, k, v);
    for (const auto& [k, v] : rest) apply_kv(cfg, k, v);
    validate_config(cfg);
    return cfg;
}

TrainConfig load_config(const std::string& path,
                        const std::vector<std::pair<std::string, std::string>>& overrides) {
    if (path.empty()) return parse_config_text("", overrides);
    std::ifstream in(path);
    if (!in) throw DataError("config: cannot read '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str(), overrides);
}

void validate_config(const TrainConfig& cfg) {
    if (cfg.views.K < 1) throw UsageError("config: views.k must be >= 1");
    if (cfg.views.K != cfg.dims.k) {
        throw UsageError("config: model fusion width and views.k out of sync");
    }
    if (cfg.epochs < 0) throw UsageError("config: train.epochs must be >= 0");
    if (cfg.warmup_epochs < 0) throw UsageError("config: train.warmup_epochs must be >= 0");
    if (cfg.batch_size < 1) throw UsageError("config: train.batch_size must be >= 1");
    if (!(cfg.base_lr > 0.0)) throw UsageError("config: train.base_lr must be positive");
    if (cfg.weight_decay < 0.0) throw UsageError("config: train.weight_decay must be >= 0");
    if (cfg.sgd_momentum < 0.0 || cfg.sgd_momentum >= 1.0) {
        throw UsageError("config: train.momentum outside [0, 1)");
    }
    if (cfg.m0 < 0.0 || cfg.m0 >= 1.0) throw UsageError("config: train.m0 outside [0, 1)");
    if (cfg.threads < 1) throw UsageError("config: train.threads must be >= 1");
    if (cfg.views.iters < 1) throw UsageError("config: views.iters must be >= 1");
    if (cfg.scene_count < 1) throw UsageError("config: data.count must be >= 1");
    if (!(cfg.sinkhorn.epsilon > 0.0)) throw UsageError("config: sinkhorn.epsilon must be positive");
}

std::string to_ini(const TrainConfig& cfg) {
    std::ostringstream os;
    os << "profile = " << cfg.profile << "\n\n";
    os << "[train]\n";
    os << "manifest = " << cfg.manifest << "\n";
    os << "out_dir = " << cfg.out_dir << "\n";
    os << "epochs = " << cfg.epochs << "\n";
    os << "warmup_epochs = " << cfg.warmup_epochs << "\n";
    os << "batch_size = " << cfg.batch_size << "\n";
    os << "base_lr = " << fmt(cfg.base_lr) << "\n";
    os << "weight_decay = " << fmt(cfg.weight_decay) << "\n";
    os << "momentum = " << fmt(cfg.sgd_momentum) << "\n";
    os << "m0 = " << fmt(cfg.m0) << "\n";
    os << "seed = " << cfg.seed << "\n";
    os << "threads = " << cfg.threads << "\n";
    os << "scene_loss = " << (cfg.switches.scene ? "true" : "false") << "\n";
    os << "scene_instance_loss = " << (cfg.switches.scene_instance ? "true" : "false") << "\n";
    os << "instance_loss = " << (cfg.switches.instance ? "true" : "false") << "\n";
    os << "\n[model]\n";
    os << "feat_dim = " << cfg.dims.feat_dim << "\n";
    os << "hidden = " << cfg.dims.hidden << "\n";
    os << "d = " << cfg.dims.d << "\n";
    os << "conv_channels = " << join_ints(cfg.dims.conv_channels) << "\n";
    os << "\n[views]\n";
    os << "scene_size = " << cfg.views.scene_size << "\n";
    os << "instance_size = " << cfg.views.instance_size << "\n";
    os << "k = " << cfg.views.K << "\n";
    os << "iters = " << cfg.views.iters << "\n";
    os << "min_scale = " << cfg.views.min_scale << "\n";
    os << "area_min = " << fmt(cfg.views.area_min) << "\n";
    os << "area_max = " << fmt(cfg.views.area_max) << "\n";
    os << "ratio_min = " << fmt(cfg.views.ratio_min) << "\n";
    os << "ratio_max = " << fmt(cfg.views.ratio_max) << "\n";
    os << "\n[proposals]\n";
    os << "sigma = " << fmt(cfg.proposals.segment.sigma) << "\n";
    os << "k = " << fmt(cfg.proposals.segment.k) << "\n";
    os << "min_size = " << cfg.proposals.segment.min_size << "\n";
    os << "min_scale = " << cfg.proposals.filter.min_scale << "\n";
    os << "ar_min = " << fmt(cfg.proposals.filter.ar_min) << "\n";
    os << "ar_max = " << fmt(cfg.proposals.filter.ar_max) << "\n";
    os << "max_iou = " << fmt(cfg.proposals.filter.max_iou) << "\n";
    os << "max_proposals = " << cfg.proposals.max_proposals << "\n";
    os << "\n[sinkhorn]\n";
    os << "epsilon = " << fmt(cfg.sinkhorn.epsilon) << "\n";
    os << "max_iter = " << cfg.sinkhorn.max_iter << "\n";
    os << "tol = " << fmt(cfg.sinkhorn.tol) << "\n";
    os << "\n[data]\n";
    os << "canvas = " << cfg.scene.canvas << "\n";
    os << "min_shapes = " << cfg.scene.min_shapes << "\n";
    os << "max_shapes = " << cfg.scene.max_shapes << "\n";
    os << "min_side = " << cfg.scene.min_side << "\n";
    os << "max_side = " << cfg.scene.max_side << "\n";
    os << "max_place_iou = " << fmt(cfg.scene.max_place_iou) << "\n";
    os << "supersample = " << cfg.scene.supersample << "\n";
    os << "count = " << cfg.scene_count << "\n";
    return os.str();
}

} // namespace univip
