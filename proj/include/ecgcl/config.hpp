#pragma once

#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ecgcl/augment.hpp"
#include "ecgcl/data.hpp"
#include "ecgcl/models.hpp"
#include "ecgcl/train.hpp"

namespace ecgcl {

// Sectioned key=value text format ("[section]" headers, '#' comments). The
// schema is versioned and documented in docs/config.md.
class ConfigFile {
public:
    static ConfigFile parse(std::istream& in) {
        ConfigFile cf;
        std::string line, section;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            if (trimmed.front() == '[') {
                if (trimmed.back() != ']')
                    throw Error("config line " + std::to_string(line_no) + ": unterminated section");
                section = trim(trimmed.substr(1, trimmed.size() - 2));
                continue;
            }
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw Error("config line " + std::to_string(line_no) + ": expected key = value");
            const std::string key = trim(trimmed.substr(0, eq));
            const std::string value = trim(trimmed.substr(eq + 1));
            if (key.empty()) throw Error("config line " + std::to_string(line_no) + ": empty key");
            cf.values_[section + "." + key] = value;
        }
        return cf;
    }

    static ConfigFile parse_string(const std::string& text) {
        std::istringstream is(text);
        return parse(is);
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) != 0;
    }

    std::string get(const std::string& section, const std::string& key,
                    const std::string& fallback) const {
        auto it = values_.find(section + "." + key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require(const std::string& section, const std::string& key) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end())
            throw Error("config: missing [" + section + "] " + key);
        return it->second;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw Error("config: [" + section + "] " + key + " is not a number: '" + it->second + "'");
        }
    }

    int get_int(const std::string& section, const std::string& key, int fallback) const {
        auto it = values_.find(section + "." + key);
        if (it == values_.end()) return fallback;
        try {
            return std::stoi(it->second);
        } catch (...) {
            throw Error("config: [" + section + "] " + key + " is not an integer: '" + it->second + "'");
        }
    }

    static std::vector<std::string> split_list(const std::string& s) {
        std::vector<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ',') {
                const std::string t = trim(cur);
                if (!t.empty()) out.push_back(t);
                cur.clear();
            } else {
                cur += c;
            }
        }
        const std::string t = trim(cur);
        if (!t.empty()) out.push_back(t);
        return out;
    }

    static std::string trim(const std::string& s) {
        size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }

private:
    std::map<std::string, std::string> values_;
};

enum class DataSource { Synthetic, Ptbxl };

// Everything one experiment needs: data source, architecture, training
// protocol, augmentation (single spec or sweep grids), seeds, output.
struct ExperimentConfig {
    DataSource source = DataSource::Synthetic;
    std::string data_path;  // record-set file, or corpus root for ptbxl
    SyntheticConfig synthetic;

    EncoderConfig encoder;
    HeadConfig head;
    TrainConfig train;

    AugmentationSpec augmentation;  // single-run commands
    std::vector<AugmentationKind> sweep_kinds{AugmentationKind::GaussianNoise};
    std::vector<char> sweep_encoders{'A', 'B'};
    std::vector<int> sweep_fractions{1, 4, 9};
    std::vector<uint64_t> seeds{1};

    std::string output_dir = ".";
};

namespace detail {

inline AugmentationSpec parse_augmentation(const ConfigFile& cf) {
    AugmentationSpec spec;
    spec.kind = augmentation_kind_from(cf.get("augmentation", "kind", "gaussian_noise"));
    spec.sigma = cf.get_double("augmentation", "sigma", spec.sigma);
    spec.scale_factor = cf.get_double("augmentation", "scale_factor", spec.scale_factor);
    spec.segments = cf.get_int("augmentation", "segments", spec.segments);
    spec.mask_fraction = cf.get_double("augmentation", "mask_fraction", spec.mask_fraction);
    spec.warp_factor = cf.get_double("augmentation", "warp_factor", spec.warp_factor);
    spec.validate();
    return spec;
}

inline void parse_int_array(const ConfigFile& cf, const std::string& section,
                            const std::string& key, std::array<int, 4>& out) {
    if (!cf.has(section, key)) return;
    const std::vector<std::string> parts = ConfigFile::split_list(cf.require(section, key));
    if (parts.size() != 4) throw Error("config: [" + section + "] " + key + " needs 4 values");
    for (int i = 0; i < 4; ++i) out[static_cast<size_t>(i)] = std::stoi(parts[static_cast<size_t>(i)]);
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const ConfigFile& cf) {
    ExperimentConfig ec;

    const std::string source = cf.get("data", "source", "synthetic");
    if (source == "synthetic") ec.source = DataSource::Synthetic;
    else if (source == "ptbxl") ec.source = DataSource::Ptbxl;
    else throw Error("config: unknown data source '" + source + "'");
    ec.data_path = cf.get("data", "path", "");
    ec.synthetic.count = cf.get_int("data", "count", ec.synthetic.count);
    ec.synthetic.classes = cf.get_int("data", "classes", ec.synthetic.classes);
    ec.synthetic.leads = cf.get_int("data", "leads", ec.synthetic.leads);
    ec.synthetic.length = cf.get_int("data", "length", ec.synthetic.length);
    ec.synthetic.sampling_rate = cf.get_double("data", "sampling_rate", ec.synthetic.sampling_rate);
    ec.synthetic.seed = static_cast<uint64_t>(cf.get_int("data", "seed", 1));

    const std::string variant = cf.get("model", "encoder", "A");
    if (variant != "A" && variant != "B") throw Error("config: encoder must be A or B");
    ec.encoder.variant = variant[0];
    ec.encoder.in_channels = ec.synthetic.leads;
    if (cf.has("model", "in_channels")) ec.encoder.in_channels = cf.get_int("model", "in_channels", 12);
    ec.encoder.input_length = cf.get_int("model", "input_length", ec.synthetic.length);
    ec.encoder.stem.out_channels = cf.get_int("model", "stem_channels", ec.encoder.stem.out_channels);
    ec.encoder.stem.kernel = cf.get_int("model", "stem_kernel", ec.encoder.stem.kernel);
    std::array<int, 4> bc{}, bk{};
    for (int i = 0; i < 4; ++i) {
        bc[static_cast<size_t>(i)] = ec.encoder.blocks[static_cast<size_t>(i)].out_channels;
        bk[static_cast<size_t>(i)] = ec.encoder.blocks[static_cast<size_t>(i)].kernel;
    }
    detail::parse_int_array(cf, "model", "block_channels", bc);
    detail::parse_int_array(cf, "model", "block_kernels", bk);
    for (int i = 0; i < 4; ++i) {
        ec.encoder.blocks[static_cast<size_t>(i)].out_channels = bc[static_cast<size_t>(i)];
        ec.encoder.blocks[static_cast<size_t>(i)].kernel = bk[static_cast<size_t>(i)];
    }
    if (cf.has("model", "pool_strides")) {
        const std::vector<std::string> parts =
            ConfigFile::split_list(cf.require("model", "pool_strides"));
        if (parts.size() != 3) throw Error("config: pool_strides needs 3 values");
        for (int i = 0; i < 3; ++i) {
            const int s = std::stoi(parts[static_cast<size_t>(i)]);
            ec.encoder.pools[static_cast<size_t>(i)] = PoolSpec{s, s};
        }
    }
    // 0 disables the explicit check and trusts the computed size
    ec.encoder.expected_flatten = cf.get_int("model", "expected_flatten", 0);
    if (ec.encoder.expected_flatten == 0 && !cf.has("model", "input_length") &&
        !cf.has("model", "stem_channels") && !cf.has("model", "block_channels") &&
        !cf.has("model", "pool_strides") && ec.encoder.input_length == 1000)
        ec.encoder.expected_flatten = 7680;

    std::array<int, 4> proj = ec.head.projection_sizes, clf = ec.head.classifier_sizes;
    // default head widths scale off the flatten size unless overridden
    const int flat = ec.encoder.flatten_size();
    proj = {std::min(2048, flat), std::min(512, flat), std::min(128, flat), std::min(64, flat)};
    clf = {std::min(512, flat), std::min(128, flat), 32, kNumSuperclasses};
    detail::parse_int_array(cf, "model", "projection_sizes", proj);
    detail::parse_int_array(cf, "model", "classifier_sizes", clf);
    ec.head.projection_sizes = proj;
    ec.head.classifier_sizes = clf;

    ec.train.pretrain_epochs = cf.get_int("train", "pretrain_epochs", ec.train.pretrain_epochs);
    ec.train.pretrain_batch = cf.get_int("train", "pretrain_batch", ec.train.pretrain_batch);
    ec.train.finetune_epochs = cf.get_int("train", "finetune_epochs", ec.train.finetune_epochs);
    ec.train.finetune_batch = cf.get_int("train", "finetune_batch", ec.train.finetune_batch);
    ec.train.adam.learning_rate = cf.get_double("train", "adam_lr", ec.train.adam.learning_rate);
    ec.train.adam.weight_decay = cf.get_double("train", "adam_weight_decay", ec.train.adam.weight_decay);
    ec.train.sgd.learning_rate = cf.get_double("train", "sgd_lr", ec.train.sgd.learning_rate);
    ec.train.temperature = cf.get_double("train", "temperature", ec.train.temperature);
    ec.train.validate();

    if (cf.has("augmentation", "kind")) ec.augmentation = detail::parse_augmentation(cf);

    if (cf.has("sweep", "kinds")) {
        ec.sweep_kinds.clear();
        for (const std::string& k : ConfigFile::split_list(cf.require("sweep", "kinds")))
            ec.sweep_kinds.push_back(augmentation_kind_from(k));
    }
    if (cf.has("sweep", "encoders")) {
        ec.sweep_encoders.clear();
        for (const std::string& e : ConfigFile::split_list(cf.require("sweep", "encoders"))) {
            if (e != "A" && e != "B") throw Error("config: sweep encoder must be A or B");
            ec.sweep_encoders.push_back(e[0]);
        }
    }
    if (cf.has("sweep", "label_fractions")) {
        ec.sweep_fractions.clear();
        for (const std::string& f : ConfigFile::split_list(cf.require("sweep", "label_fractions")))
            ec.sweep_fractions.push_back(LabelFraction::of(std::stoi(f)).numerator);
    }
    if (cf.has("sweep", "seeds")) {
        ec.seeds.clear();
        for (const std::string& s : ConfigFile::split_list(cf.require("sweep", "seeds")))
            ec.seeds.push_back(static_cast<uint64_t>(std::stoull(s)));
        if (ec.seeds.empty()) throw Error("config: empty seed list");
    }
    ec.output_dir = cf.get("output", "dir", ec.output_dir);
    return ec;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open config '" + path + "'");
    ConfigFile cf = ConfigFile::parse(in);
    return parse_experiment_config(cf);
}

}  // namespace ecgcl
