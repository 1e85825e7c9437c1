#include "xbias/gradcam/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "xbias/core/seed.hpp"
#include "xbias/dataset/manifest.hpp"

namespace xbias::gradcam {

LayerGradient layer_gradient(const nn::Network& net, const nn::Tensor& input, std::size_t layer_index,
                             int target_class) {
    const auto outs = net.trace(input);
    LayerGradient g;
    g.layer_index = layer_index;
    g.activation = outs.at(layer_index);
    g.logits = outs.back();
    if (target_class < 0 || static_cast<std::size_t>(target_class) >= g.logits.size()) {
        throw ConfigError(fmt::format("target class {} out of range", target_class));
    }
    nn::Tensor onehot(g.logits.shape);
    onehot.values[target_class] = 1.0;
    g.gradient = net.gradient_wrt_output(layer_index, g.activation, onehot);
    return g;
}

std::vector<double> channel_weights(const nn::Tensor& gradient) {
    const auto& s = gradient.shape;
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    std::vector<double> w(static_cast<std::size_t>(s.channels), 0.0);
    for (int c = 0; c < s.channels; ++c) {
        const auto* p = gradient.values.data() + c * plane;
        w[c] = std::accumulate(p, p + plane, 0.0) / static_cast<double>(plane);
    }
    return w;
}

std::vector<double> weighted_activation(const nn::Tensor& activation, std::span<const double> weights) {
    const auto& s = activation.shape;
    if (weights.size() != static_cast<std::size_t>(s.channels)) throw Error("channel weight count mismatch");
    const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
    std::vector<double> cam(plane, 0.0);
    for (int c = 0; c < s.channels; ++c) {
        const auto* p = activation.values.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) cam[i] += weights[c] * p[i];
    }
    for (auto& v : cam) v = std::max(v, 0.0);
    return cam;
}

std::vector<double> upsample_bilinear(std::span<const double> src, int src_w, int src_h, int dst_w, int dst_h) {
    std::vector<double> out(static_cast<std::size_t>(dst_w) * dst_h);
    const double sx = static_cast<double>(src_w) / dst_w, sy = static_cast<double>(src_h) / dst_h;
    for (int y = 0; y < dst_h; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
        const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src_h - 1);
        const double ty = fy - y0;
        for (int x = 0; x < dst_w; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
            const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src_w - 1);
            const double tx = fx - x0;
            const double top = src[y0 * src_w + x0] * (1 - tx) + src[y0 * src_w + x1] * tx;
            const double bottom = src[y1 * src_w + x0] * (1 - tx) + src[y1 * src_w + x1] * tx;
            out[static_cast<std::size_t>(y) * dst_w + x] = top * (1 - ty) + bottom * ty;
        }
    }
    return out;
}

SaliencyMap grad_cam(const nn::Network& net, const Image& image, int target_class, const std::string& layer) {
    std::size_t li = 0;
    try {
        li = net.index_of(layer);
    } catch (const std::exception&) {
        throw ConfigError(fmt::format("unknown layer '{}'", layer));
    }
    if (!net.layer(li).is_convolutional()) throw ConfigError(fmt::format("layer '{}' is not convolutional", layer));

    const auto g = layer_gradient(net, nn::to_tensor(image), li, target_class);
    const auto cam = weighted_activation(g.activation, channel_weights(g.gradient));

    SaliencyMap map;
    map.width = image.width;
    map.height = image.height;
    map.target_class = target_class;
    map.layer = layer;
    map.values = upsample_bilinear(cam, g.activation.shape.width, g.activation.shape.height, image.width,
                                   image.height);
    const double peak = *std::max_element(map.values.begin(), map.values.end());
    if (peak > 0) {
        for (auto& v : map.values) v /= peak;
    } else {
        std::fill(map.values.begin(), map.values.end(), 0.0);
        map.no_signal = true;
    }
    return map;
}

std::optional<double> overlap_score(const SaliencyMap& saliency, const Mask& mask, double mass_quantile) {
    if (!(mass_quantile > 0 && mass_quantile <= 1)) throw ConfigError("mass_quantile must lie in (0, 1]");
    if (mask.width != saliency.width || mask.height != saliency.height) {
        throw ValidationError("saliency and mask sizes differ");
    }
    const double total = std::accumulate(saliency.values.begin(), saliency.values.end(), 0.0);
    if (!(total > 0)) return std::nullopt;

    std::vector<std::size_t> order(saliency.values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return saliency.values[a] > saliency.values[b]; });
    const double target = mass_quantile * total * (1.0 - 1e-12);
    double mass = 0;
    std::size_t taken = 0, inside = 0;
    for (std::size_t idx : order) {
        mass += saliency.values[idx];
        ++taken;
        inside += mask.bits[idx] != 0;
        if (mass >= target) break;
    }
    return static_cast<double>(inside) / static_cast<double>(taken);
}

nlohmann::json to_json(const BiasVerdict& v) {
    nlohmann::json j{{"biased", v.biased},
                     {"source", v.source == VerdictSource::automatic ? "automatic" : "human"}};
    if (!v.attribute.empty()) j["attribute"] = v.attribute;
    if (!v.feature.empty()) j["feature"] = v.feature;
    if (v.overlap) j["overlap"] = *v.overlap;
    if (!v.annotator.empty()) j["annotator"] = v.annotator;
    return j;
}

BiasVerdict verdict_from_json(const nlohmann::json& j) {
    BiasVerdict v;
    v.biased = j.at("biased").get<bool>();
    v.source = j.value("source", "automatic") == "human" ? VerdictSource::human : VerdictSource::automatic;
    v.attribute = j.value("attribute", "");
    v.feature = j.value("feature", "");
    if (j.contains("overlap")) v.overlap = j.at("overlap").get<double>();
    v.annotator = j.value("annotator", "");
    return v;
}

nlohmann::json VerdictParams::to_json() const { return {{"tau", threshold}, {"mass_quantile", mass_quantile}}; }

std::vector<FeatureList> feature_lists(const dataset::Dataset& ds) {
    std::vector<FeatureList> out;
    for (const auto& a : ds.attributes) out.push_back({a.name, a.feature_list});
    return out;
}

std::optional<BiasVerdict> auto_verdict(const SaliencyMap& saliency, const std::map<std::string, Mask>& masks,
                                        const std::vector<FeatureList>& lists, const VerdictParams& params) {
    for (const auto& list : lists) {
        for (const auto& f : list.features) {
            if (!masks.contains(f)) return std::nullopt;
        }
    }
    BiasVerdict v;
    v.source = VerdictSource::automatic;
    double best = -1;
    for (const auto& list : lists) {
        for (const auto& f : list.features) {
            const double score = overlap_score(saliency, masks.at(f), params.mass_quantile).value_or(0.0);
            if (score > best) {
                best = score;
                v.attribute = list.attribute;
                v.feature = f;
            }
        }
    }
    if (best < 0) best = 0;
    v.overlap = best;
    v.biased = !saliency.no_signal && best >= params.threshold;
    if (!v.biased) {
        v.attribute.clear();
        v.feature.clear();
    }
    return v;
}

std::vector<std::string> select_for_examination(const dataset::Dataset& ds, std::span<const std::string> test_ids,
                                                const std::string& attribute, int budget, std::uint64_t seed) {
    if (budget < 0) throw ConfigError("examination budget must be non-negative");
    const auto& spec = ds.attribute(attribute);
    metrics::CellGrid<std::vector<std::pair<std::uint64_t, std::string>>> cells;
    for (const auto& id : test_ids) {
        const auto& s = ds.sample(id);
        cells[s.class_label][spec.instance_index(s.attributes.at(attribute))].emplace_back(item_priority(seed, id), id);
    }
    std::vector<std::string> out;
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            auto& cell = cells[c][i];
            if (cell.size() < static_cast<std::size_t>(budget)) {
                throw ValidationError(fmt::format("subgroup ({}, {}={}) has {} test samples, budget is {}",
                                                  ds.class_names[c], attribute, spec.instances[i], cell.size(),
                                                  budget));
            }
            std::sort(cell.begin(), cell.end());
            for (int k = 0; k < budget; ++k) out.push_back(cell[k].second);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<ExplanationRecord> explain(const nn::Network& net, const dataset::Dataset& ds,
                                       std::span<const std::string> ids, const ExplainParams& params, bool judge) {
    const auto lists = feature_lists(ds);
    std::vector<ExplanationRecord> out;
    out.reserve(ids.size());
    for (const auto& id : ids) {
        const auto& s = ds.sample(id);
        ExplanationRecord r;
        r.sample_id = id;
        const auto logits = net.forward(nn::to_tensor(s.image));
        r.predicted = logits.values.at(1) > logits.values.at(0) ? 1 : 0;
        r.correct = r.predicted == s.class_label;
        r.saliency = grad_cam(net, s.image, r.predicted, params.layer);
        if (judge) {
            r.verdict = auto_verdict(r.saliency, s.masks, lists, params.verdict);
            r.unjudgeable = !r.verdict.has_value();
        }
        out.push_back(std::move(r));
    }
    return out;
}

metrics::BiasCountTable collect_counts(std::span<const ExplanationRecord> records, const dataset::Dataset& ds,
                                       const std::string& attribute, const std::string& composition_label) {
    const auto& spec = ds.attribute(attribute);
    metrics::BiasCountTable t;
    t.attribute = attribute;
    t.class_names = ds.class_names;
    t.instances = spec.instances;
    t.composition_label = composition_label;
    std::vector<std::string> pending;
    for (const auto& r : records) {
        if (r.unjudgeable) continue;
        if (!r.verdict) {
            pending.push_back(r.sample_id);
            continue;
        }
        const auto& s = ds.sample(r.sample_id);
        auto& cell = t.cells[s.class_label][spec.instance_index(s.attributes.at(attribute))];
        ++cell.examined;
        if (r.verdict->biased && r.verdict->attribute == attribute) {
            ++cell.bias;
            cell.incorrect_bias += !r.correct;
        }
    }
    if (!pending.empty()) throw ValidationError("records without a verdict", pending);
    t.validate();
    return t;
}

std::array<std::uint8_t, 3> colormap(double v) {
    v = std::clamp(v, 0.0, 1.0);
    auto ramp = [](double x) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
    return {ramp(1.5 - std::abs(4 * v - 3)), ramp(1.5 - std::abs(4 * v - 2)), ramp(1.5 - std::abs(4 * v - 1))};
}

Image render_overlay(const Image& image, const SaliencyMap& saliency, double alpha) {
    if (image.width != saliency.width || image.height != saliency.height) {
        throw ValidationError("overlay size mismatch");
    }
    Image out(image.width, image.height, 3);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            const auto rgb = colormap(saliency.at(x, y));
            for (int c = 0; c < 3; ++c) {
                const double base = image.at(x, y, image.channels == 3 ? c : 0);
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround((1 - alpha) * base + alpha * rgb[c]));
            }
        }
    }
    return out;
}

nlohmann::json sidecar_json(const ExplanationRecord& r, const ExplainParams& params) {
    nlohmann::json j{{"sample_id", r.sample_id},
                     {"pred", r.predicted},
                     {"correct", r.correct},
                     {"layer", r.saliency.layer},
                     {"target_class", r.saliency.target_class},
                     {"no_signal", r.saliency.no_signal},
                     {"unjudgeable", r.unjudgeable},
                     {"params",
                      {{"tau", params.verdict.threshold},
                       {"mass_quantile", params.verdict.mass_quantile},
                       {"upsampling", "bilinear"},
                       {"overlay_alpha", kOverlayAlpha},
                       {"colormap", "jet"}}}};
    if (r.verdict) j["verdict"] = to_json(*r.verdict);
    return j;
}

void write_explanation(const std::filesystem::path& dir, const ExplanationRecord& r, const Image& image,
                       const ExplainParams& params) {
    std::filesystem::create_directories(dir);
    write_png(dir / (r.sample_id + ".overlay.png"), render_overlay(image, r.saliency));
    write_unit_map_png16(dir / (r.sample_id + ".map.png"), r.saliency.width, r.saliency.height, r.saliency.values);
    dataset::write_text_file(dir / (r.sample_id + ".json"), sidecar_json(r, params).dump(2) + "\n");
}

ExplanationRecord read_explanation(const std::filesystem::path& dir, const std::string& sample_id) {
    const auto j = nlohmann::json::parse(dataset::read_text_file(dir / (sample_id + ".json")));
    ExplanationRecord r;
    r.sample_id = j.at("sample_id").get<std::string>();
    r.predicted = j.at("pred").get<int>();
    r.correct = j.at("correct").get<bool>();
    r.unjudgeable = j.value("unjudgeable", false);
    if (j.contains("verdict")) r.verdict = verdict_from_json(j.at("verdict"));
    r.saliency.layer = j.at("layer").get<std::string>();
    r.saliency.target_class = j.value("target_class", r.predicted);
    r.saliency.no_signal = j.value("no_signal", false);
    r.saliency.values = read_unit_map_png16(dir / (sample_id + ".map.png"), r.saliency.width, r.saliency.height);
    return r;
}

} // namespace xbias::gradcam
