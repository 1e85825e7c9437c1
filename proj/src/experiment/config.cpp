#include "xbias/experiment/config.hpp"

#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "xbias/core/seed.hpp"
#include "xbias/dataset/manifest.hpp"

namespace xbias::experiment {

const std::vector<SchemaKey>& config_schema() {
    static const std::vector<SchemaKey> schema = {
        {"experiment.name", "string", "experiment", "label stored with the results"},
        {"experiment.seed", "uint", "0", "master seed; every stage seed derives from it"},
        {"experiment.output", "string", "", "results directory"},
        {"experiment.judging", "string", "auto", "auto | human"},
        {"experiment.ratios", "list", "1:0,3:1,1:1,1:3,0:1", "A:B ratios of class 0 (class 1 interchanged)"},

        {"dataset.source", "string", "synthetic", "synthetic | import"},
        {"dataset.per_subgroup", "int", "200", "synthetic images per subgroup"},
        {"dataset.width", "int", "64", "synthetic image width"},
        {"dataset.height", "int", "64", "synthetic image height"},
        {"dataset.attribute_count", "int", "2", "synthetic attributes (1-3)"},
        {"dataset.glyph_size", "int", "12", "class glyph size in pixels"},
        {"dataset.marker_size", "int", "14", "attribute marker size in pixels"},
        {"dataset.glyph_gray", "int", "30", "class glyph stroke value"},
        {"dataset.noise_sigma", "double", "12", "pixel noise standard deviation"},
        {"dataset.occluded_fraction", "double", "0.3", "fraction of samples with a weakened class glyph"},
        {"dataset.occluded_visibility", "double", "0.25", "contrast kept by weakened glyphs"},
        {"dataset.root", "string", "", "import: dataset root"},
        {"dataset.manifest", "string", "", "import: manifest path (default <root>/manifest.json)"},

        {"composition.attributes", "list", "", "attributes to bias (default: first attribute)"},
        {"composition.joint", "bool", "false", "bias all listed attributes jointly at each ratio"},
        {"composition.class_train_size", "int", "300", "training images per class"},
        {"composition.test_fraction", "double", "0.25", "test share of the smallest subgroup"},

        {"training.channels", "list", "16,32,32", "extractor conv channels"},
        {"training.pretrain_samples", "int", "3000", "shape-task images for extractor pretraining"},
        {"training.pretrain_epochs", "int", "10", "extractor pretraining epochs"},
        {"training.pretrain_image_size", "int", "32", "shape-task image size"},
        {"training.pretrain_learning_rate", "double", "0.003", "extractor pretraining step size"},
        {"training.epochs", "int", "60", "head training epochs"},
        {"training.learning_rate", "double", "0.01", "head step size"},
        {"training.batch_size", "int", "32", "head minibatch size"},
        {"training.hidden", "int", "16", "head hidden units"},
        {"training.weight_decay", "double", "0.0001", "head L2 weight decay"},

        {"gradcam.layer", "string", "conv3", "convolutional layer for saliency"},
        {"gradcam.tau", "double", "0.5", "overlap threshold for a biased verdict"},
        {"gradcam.mass_quantile", "double", "0.2", "saliency mass defining the salient region"},
        {"gradcam.budget", "int", "50", "explanations examined per subgroup"},
        {"gradcam.write_explanations", "bool", "false", "write overlay, raw map and sidecar per examined sample"},

        {"tcav.enabled", "bool", "true", "compute concept scores"},
        {"tcav.layer", "string", "conv3", "layer for concept activation vectors"},
        {"tcav.runs", "int", "10", "CAV runs per concept"},
        {"tcav.concept_examples", "int", "100", "synthetic examples per concept side"},
        {"tcav.concepts", "string", "", "concept directory (default: synthetic concepts)"},
        {"tcav.alpha", "double", "0.05", "significance level"},

        {"annotation.server", "bool", "false", "human judging is served over HTTP"},
        {"annotation.annotators", "int", "1", "verdicts per item (majority vote above 1)"},
    };
    return schema;
}

namespace {

const SchemaKey* find_key(const std::string& key) {
    for (const auto& k : config_schema()) {
        if (key == k.key) return &k;
    }
    return nullptr;
}

bool is_tolerance_key(const std::string& key) { return key.rfind("tolerance.", 0) == 0 && key.size() > 10; }

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    if (boost::algorithm::trim_copy(text).empty()) return parts;
    boost::algorithm::split(parts, text, boost::is_any_of(","));
    for (auto& p : parts) boost::algorithm::trim(p);
    return parts;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    T v{};
    in >> v;
    if (!in || !in.eof()) throw ConfigError(fmt::format("{}: '{}' is not a valid number", key, text));
    return v;
}

void check_type(const std::string& key, const std::string& type, const std::string& value) {
    if (type == "int") {
        parse_number<long>(key, value);
    } else if (type == "uint") {
        if (!value.empty() && value[0] == '-') throw ConfigError(key + ": must be non-negative");
        parse_number<std::uint64_t>(key, value);
    } else if (type == "double") {
        parse_number<double>(key, value);
    } else if (type == "bool") {
        if (value != "true" && value != "false") throw ConfigError(key + ": expected true or false");
    }
}

void set_value(ConfigMap& values, const std::string& key, std::string value) {
    boost::algorithm::trim(value);
    if (is_tolerance_key(key)) {
        check_type(key, "double", value);
    } else if (const auto* k = find_key(key)) {
        check_type(key, k->type, value);
    } else {
        throw ConfigError(fmt::format("unknown configuration key '{}'", key));
    }
    values[key] = value;
}

} // namespace

ExperimentConfig config_from_map(const ConfigMap& input) {
    ConfigMap values;
    for (const auto& k : config_schema()) values[k.key] = k.default_value;
    for (const auto& [key, value] : input) set_value(values, key, value);

    auto str = [&](const char* key) { return values.at(key); };
    auto num_i = [&](const char* key) { return static_cast<int>(parse_number<long>(key, values.at(key))); };
    auto num_d = [&](const char* key) { return parse_number<double>(key, values.at(key)); };
    auto flag = [&](const char* key) { return values.at(key) == "true"; };

    ExperimentConfig c;
    c.name = str("experiment.name");
    c.seed = parse_number<std::uint64_t>("experiment.seed", values.at("experiment.seed"));
    c.output = str("experiment.output");
    c.judging = str("experiment.judging");
    if (c.judging != "auto" && c.judging != "human") throw ConfigError("experiment.judging must be auto or human");
    for (const auto& r : split_list(str("experiment.ratios"))) {
        try {
            c.ratios.push_back(dataset::Ratio::parse(r));
        } catch (const std::exception& e) {
            throw ConfigError(fmt::format("experiment.ratios: {}", e.what()));
        }
    }
    if (c.ratios.empty()) throw ConfigError("experiment.ratios must not be empty");
    for (std::size_t i = 0; i < c.ratios.size(); ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (c.ratios[i].label == c.ratios[j].label) throw ConfigError("duplicate ratio " + c.ratios[i].label);
        }
    }

    c.dataset_source = str("dataset.source");
    if (c.dataset_source != "synthetic" && c.dataset_source != "import") {
        throw ConfigError("dataset.source must be synthetic or import");
    }
    c.synthetic.per_subgroup = num_i("dataset.per_subgroup");
    c.synthetic.width = num_i("dataset.width");
    c.synthetic.height = num_i("dataset.height");
    c.synthetic.attribute_count = num_i("dataset.attribute_count");
    c.synthetic.glyph_size = num_i("dataset.glyph_size");
    c.synthetic.marker_size = num_i("dataset.marker_size");
    c.synthetic.glyph_gray = num_i("dataset.glyph_gray");
    c.synthetic.noise_sigma = num_d("dataset.noise_sigma");
    c.synthetic.occluded_fraction = num_d("dataset.occluded_fraction");
    c.synthetic.occluded_visibility = num_d("dataset.occluded_visibility");
    c.synthetic.seed = derive_seed(c.seed, "global", "dataset");
    c.import_root = str("dataset.root");
    c.import_manifest = str("dataset.manifest");
    if (c.dataset_source == "synthetic") {
        if (c.synthetic.per_subgroup < 1) throw ConfigError("dataset.per_subgroup must be at least 1");
        dataset::validate_synthetic_config(c.synthetic);
    } else {
        if (c.import_root.empty()) throw ConfigError("dataset.root is required for imported datasets");
        if (c.import_manifest.empty()) c.import_manifest = c.import_root / "manifest.json";
    }

    c.attributes = split_list(str("composition.attributes"));
    c.joint = flag("composition.joint");
    c.class_train_size = num_i("composition.class_train_size");
    c.test_fraction = num_d("composition.test_fraction");
    if (c.class_train_size < 1) throw ConfigError("composition.class_train_size must be positive");
    if (!(c.test_fraction > 0 && c.test_fraction < 1)) throw ConfigError("composition.test_fraction must lie in (0, 1)");
    if (c.joint && c.attributes.size() < 2) throw ConfigError("composition.joint needs at least two attributes");

    c.extractor.channels.clear();
    for (const auto& ch : split_list(str("training.channels"))) {
        const int v = parse_number<int>("training.channels", ch);
        if (v < 1) throw ConfigError("training.channels must be positive");
        c.extractor.channels.push_back(v);
    }
    if (c.extractor.channels.empty()) throw ConfigError("training.channels must not be empty");
    c.pretrain.samples = num_i("training.pretrain_samples");
    c.pretrain.epochs = num_i("training.pretrain_epochs");
    c.pretrain.image_size = num_i("training.pretrain_image_size");
    c.pretrain.learning_rate = num_d("training.pretrain_learning_rate");
    c.pretrain.seed = derive_seed(c.seed, "global", "pretrain");
    c.train.epochs = num_i("training.epochs");
    c.train.learning_rate = num_d("training.learning_rate");
    c.train.batch_size = num_i("training.batch_size");
    c.train.hidden = num_i("training.hidden");
    c.train.weight_decay = num_d("training.weight_decay");
    if (c.pretrain.samples < 1 || c.pretrain.epochs < 0 || c.pretrain.image_size < 24) {
        throw ConfigError("invalid extractor pretraining settings");
    }
    if (c.train.epochs < 1 || c.train.batch_size < 1 || c.train.hidden < 1 || !(c.train.learning_rate > 0) ||
        c.train.weight_decay < 0) {
        throw ConfigError("invalid head training settings");
    }

    c.explain.layer = str("gradcam.layer");
    c.explain.verdict.threshold = num_d("gradcam.tau");
    c.explain.verdict.mass_quantile = num_d("gradcam.mass_quantile");
    c.budget = num_i("gradcam.budget");
    c.write_explanations = flag("gradcam.write_explanations");
    if (!(c.explain.verdict.threshold >= 0 && c.explain.verdict.threshold <= 1)) {
        throw ConfigError("gradcam.tau must lie in [0, 1]");
    }
    if (!(c.explain.verdict.mass_quantile > 0 && c.explain.verdict.mass_quantile <= 1)) {
        throw ConfigError("gradcam.mass_quantile must lie in (0, 1]");
    }
    if (c.budget < 0) throw ConfigError("gradcam.budget must be non-negative");

    c.tcav_enabled = flag("tcav.enabled");
    c.tcav_layer = str("tcav.layer");
    c.tcav_runs = num_i("tcav.runs");
    c.concept_examples = num_i("tcav.concept_examples");
    c.concepts_dir = str("tcav.concepts");
    c.alpha = num_d("tcav.alpha");
    if (c.tcav_enabled) {
        if (c.tcav_runs < 2) throw ConfigError("tcav.runs must be at least 2");
        if (c.concept_examples < 4) throw ConfigError("tcav.concept_examples must be at least 4");
        if (!(c.alpha > 0 && c.alpha < 1)) throw ConfigError("tcav.alpha must lie in (0, 1)");
        if (c.dataset_source == "import" && c.concepts_dir.empty()) {
            throw ConfigError("tcav.concepts is required for imported datasets");
        }
    }

    c.annotation_server = flag("annotation.server");
    c.annotators_required = num_i("annotation.annotators");
    if (c.annotators_required < 1) throw ConfigError("annotation.annotators must be at least 1");
    if (c.judging == "human" && !c.annotation_server) {
        throw ConfigError("human judging requires annotation.server = true");
    }

    for (const auto& [key, value] : values) {
        if (is_tolerance_key(key)) c.tolerance[key.substr(10)] = parse_number<double>(key, value);
    }
    c.values = std::move(values);
    return c;
}

ExperimentConfig parse_config(const std::string& ini_text, const std::vector<std::string>& overrides) {
    boost::property_tree::ptree tree;
    std::istringstream in(ini_text);
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    ConfigMap values;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError(fmt::format("key '{}' is outside any section", section));
        for (const auto& [key, leaf] : body) {
            const std::string full = section + "." + key;
            if (!leaf.empty()) throw ConfigError("nested key " + full);
            values[full] = leaf.data();
        }
    }
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("override '{}' is not key=value", o));
        values[boost::algorithm::trim_copy(o.substr(0, eq))] = o.substr(eq + 1);
    }
    return config_from_map(values);
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::string text;
    try {
        text = dataset::read_text_file(path);
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return parse_config(text, overrides);
}

std::string canonical_ini(const ExperimentConfig& cfg) {
    std::string out, section;
    for (const auto& [key, value] : cfg.values) {
        const auto dot = key.find('.');
        const auto s = key.substr(0, dot);
        if (s != section) {
            if (!section.empty()) out += "\n";
            out += "[" + s + "]\n";
            section = s;
        }
        out += key.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::string text;
    for (const auto& [key, value] : cfg.values) {
        if (key == "experiment.output") continue;
        text += key + "=" + value + "\n";
    }
    return fmt::format("{:016x}", fnv1a(text));
}

std::vector<std::string> config_diff(const ExperimentConfig& before, const ExperimentConfig& after) {
    std::vector<std::string> out;
    std::map<std::string, std::pair<std::string, std::string>> all;
    for (const auto& [k, v] : before.values) all[k].first = v;
    for (const auto& [k, v] : after.values) all[k].second = v;
    for (const auto& [k, pair] : all) {
        if (k == "experiment.output") continue;
        if (pair.first != pair.second) out.push_back(fmt::format("{}: '{}' -> '{}'", k, pair.first, pair.second));
    }
    return out;
}

} // namespace xbias::experiment
