#include "xbias/dataset/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <random>

#include <fmt/format.h>

#include "xbias/core/error.hpp"
#include "xbias/core/seed.hpp"

namespace xbias::dataset {
namespace {

struct Rgb {
    int r, g, b;
};

struct MarkerStyle {
    const char* attribute;
    const char* feature;
    std::array<const char*, 2> instance_names;
    std::array<Rgb, 2> colors;
};

enum class MarkerShape { Square, Bar, Triangle };

constexpr std::array<MarkerStyle, 3> kMarkers{{
    {"badge_color", "badge", {"red", "blue"}, {Rgb{220, 40, 40}, Rgb{40, 80, 220}}},
    {"band_color", "band", {"green", "yellow"}, {Rgb{40, 180, 60}, Rgb{230, 200, 40}}},
    {"tag_color", "tag", {"magenta", "cyan"}, {Rgb{200, 60, 200}, Rgb{40, 200, 200}}},
}};

constexpr std::array<MarkerShape, 3> kShapes{MarkerShape::Square, MarkerShape::Bar, MarkerShape::Triangle};

constexpr int kBackground = 128;
constexpr int kMargin = 1;

struct Box {
    int x = 0, y = 0, w = 0, h = 0;

    bool overlaps(const Box& o, int margin) const {
        return x < o.x + o.w + margin && o.x < x + w + margin && y < o.y + o.h + margin &&
               o.y < y + h + margin;
    }
};

/// Shelf packing: a deterministic layout proving the boxes fit.
std::optional<std::vector<Box>> shelf_pack(const std::vector<Box>& sizes, int width, int height) {
    std::vector<std::size_t> order(sizes.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sizes[a].h > sizes[b].h; });
    std::vector<Box> out(sizes);
    int cx = 0, cy = 0, row_h = 0;
    for (std::size_t i : order) {
        const Box& s = sizes[i];
        if (s.w > width || s.h > height) return std::nullopt;
        if (cx + s.w > width) {
            cx = 0;
            cy += row_h + kMargin;
            row_h = 0;
        }
        if (cy + s.h > height) return std::nullopt;
        out[i].x = cx;
        out[i].y = cy;
        cx += s.w + kMargin;
        row_h = std::max(row_h, s.h);
    }
    return out;
}

std::vector<Box> feature_sizes(const SyntheticConfig& cfg, int markers) {
    std::vector<Box> sizes;
    sizes.push_back({0, 0, cfg.glyph_size, cfg.glyph_size});
    for (int a = 0; a < markers; ++a) {
        const int h = kShapes[a] == MarkerShape::Bar ? std::max(2, cfg.marker_size / 2) : cfg.marker_size;
        sizes.push_back({0, 0, cfg.marker_size, h});
    }
    sizes.push_back({0, 0, cfg.distractor_size, cfg.distractor_size});
    return sizes;
}

std::vector<Box> place_boxes(const std::vector<Box>& sizes, int width, int height, std::mt19937_64& rng) {
    for (int attempt = 0; attempt < 2000; ++attempt) {
        std::vector<Box> placed;
        bool ok = true;
        for (const Box& s : sizes) {
            std::uniform_int_distribution<int> dx(0, width - s.w);
            std::uniform_int_distribution<int> dy(0, height - s.h);
            Box b{dx(rng), dy(rng), s.w, s.h};
            for (const Box& p : placed) {
                if (b.overlaps(p, kMargin)) {
                    ok = false;
                    break;
                }
            }
            if (!ok) break;
            placed.push_back(b);
        }
        if (ok) return placed;
    }
    auto packed = shelf_pack(sizes, width, height);
    if (!packed) throw ConfigError("features do not fit in the image");
    return *packed;
}

class Canvas {
public:
    Canvas(int w, int h) : img_(w, h, 3, kBackground) {}

    void paint(const Box& box, const Rgb& color, Mask* mask, auto inside) {
        for (int y = box.y; y < box.y + box.h; ++y) {
            for (int x = box.x; x < box.x + box.w; ++x) {
                if (!inside(x - box.x, y - box.y)) continue;
                img_.at(x, y, 0) = static_cast<std::uint8_t>(color.r);
                img_.at(x, y, 1) = static_cast<std::uint8_t>(color.g);
                img_.at(x, y, 2) = static_cast<std::uint8_t>(color.b);
                if (mask) mask->at(x, y) = 1;
            }
        }
    }

    void add_noise(double sigma, std::mt19937_64& rng) {
        if (sigma <= 0) return;
        std::normal_distribution<double> noise(0.0, sigma);
        for (auto& p : img_.pixels) {
            p = static_cast<std::uint8_t>(std::clamp<long>(std::lround(p + noise(rng)), 0, 255));
        }
    }

    Image& image() { return img_; }

private:
    Image img_;
};

auto plus_shape(int size) {
    const int t = std::max(1, size / 4);
    const int lo = (size - t) / 2;
    return [=](int x, int y) { return (x >= lo && x < lo + t) || (y >= lo && y < lo + t); };
}

auto ring_shape(int size) {
    const double c = (size - 1) / 2.0;
    const double outer = size / 2.0;
    const double inner = outer - std::max(1.5, size / 5.0);
    return [=](int x, int y) {
        const double d = std::hypot(x - c, y - c);
        return d <= outer && d >= inner;
    };
}

auto filled(int, int) { return true; }

auto triangle_shape(int w, int h) {
    return [=](int x, int y) {
        const double half = (w / 2.0) * (y + 1.0) / h;
        return std::fabs(x + 0.5 - w / 2.0) <= half;
    };
}

auto outline_square(int size) {
    return [=](int x, int y) { return x == 0 || y == 0 || x == size - 1 || y == size - 1; };
}

auto outline_diamond(int size) {
    const double c = (size - 1) / 2.0;
    return [=](int x, int y) {
        const double d = std::fabs(x - c) + std::fabs(y - c);
        return d <= c + 0.5 && d >= c - 0.9;
    };
}

Rgb blend_gray(int gray, double visibility) {
    const int v = static_cast<int>(std::lround(kBackground + visibility * (gray - kBackground)));
    return {v, v, v};
}

void draw_marker(Canvas& canvas, int attr, int instance, const Box& box, Mask* mask) {
    const Rgb color = kMarkers[attr].colors[instance];
    switch (kShapes[attr]) {
    case MarkerShape::Square:
    case MarkerShape::Bar: canvas.paint(box, color, mask, filled); break;
    case MarkerShape::Triangle: canvas.paint(box, color, mask, triangle_shape(box.w, box.h)); break;
    }
}

void draw_distractor(Canvas& canvas, const Box& box, std::mt19937_64& rng) {
    const Rgb color{176, 176, 176};
    if (std::uniform_int_distribution<int>(0, 1)(rng) == 0) {
        canvas.paint(box, color, nullptr, outline_square(box.w));
    } else {
        canvas.paint(box, color, nullptr, outline_diamond(box.w));
    }
}

} // namespace

std::vector<AttributeSpec> synthetic_attributes(int count) {
    if (count < 1 || count > static_cast<int>(kMarkers.size())) {
        throw ConfigError(fmt::format("synthetic attribute count must be in [1, {}]", kMarkers.size()));
    }
    std::vector<AttributeSpec> out;
    for (int a = 0; a < count; ++a) {
        out.push_back({kMarkers[a].attribute,
                       {kMarkers[a].instance_names[0], kMarkers[a].instance_names[1]},
                       {kMarkers[a].feature}});
    }
    return out;
}

void validate_synthetic_config(const SyntheticConfig& cfg) {
    if (cfg.per_subgroup < 1) throw ConfigError("per_subgroup must be >= 1");
    if (cfg.width < 32 || cfg.height < 32) throw ConfigError("synthetic images must be at least 32x32");
    synthetic_attributes(cfg.attribute_count);
    if (cfg.glyph_size < 4 || cfg.marker_size < 4 || cfg.distractor_size < 3) {
        throw ConfigError("feature sizes too small to draw");
    }
    if (cfg.occluded_fraction < 0 || cfg.occluded_fraction > 1) throw ConfigError("occluded_fraction must be in [0, 1]");
    if (cfg.occluded_visibility < 0 || cfg.occluded_visibility > 1) {
        throw ConfigError("occluded_visibility must be in [0, 1]");
    }
    if (!shelf_pack(feature_sizes(cfg, cfg.attribute_count), cfg.width, cfg.height)) {
        throw ConfigError(fmt::format("{}x{} images are too small to place the class glyph, {} marker(s) "
                                      "and the distractor without overlap",
                                      cfg.width, cfg.height, cfg.attribute_count));
    }
}

Dataset generate_synthetic_dataset(const SyntheticConfig& cfg) {
    validate_synthetic_config(cfg);
    Dataset ds;
    ds.attributes = synthetic_attributes(cfg.attribute_count);
    ds.class_names = {"cross", "ring"};
    const auto sizes = feature_sizes(cfg, cfg.attribute_count);

    int serial = 0;
    for (const SubgroupKey& key : ds.all_subgroups()) {
        for (int n = 0; n < cfg.per_subgroup; ++n, ++serial) {
            SampleRecord s;
            s.id = fmt::format("s{:05d}", serial);
            s.class_label = key.class_label;
            for (std::size_t a = 0; a < ds.attributes.size(); ++a) {
                s.attributes[ds.attributes[a].name] = ds.attributes[a].instances[key.instances[a]];
            }
            std::mt19937_64 rng(derive_seed(cfg.seed, s.id, "synthetic"));
            const auto boxes = place_boxes(sizes, cfg.width, cfg.height, rng);
            Canvas canvas(cfg.width, cfg.height);

            Mask glyph_mask(cfg.width, cfg.height);
            const bool occluded = std::uniform_real_distribution<double>(0, 1)(rng) < cfg.occluded_fraction;
            const Box& gb = boxes[0];
            const Rgb glyph_color = blend_gray(cfg.glyph_gray, occluded ? cfg.occluded_visibility : 1.0);
            const int covered_half = occluded ? std::uniform_int_distribution<int>(0, 3)(rng) : -1;
            auto visible = [&](int x, int y) {
                switch (covered_half) {
                case 0: return x >= gb.w / 2;
                case 1: return x < gb.w / 2;
                case 2: return y >= gb.h / 2;
                case 3: return y < gb.h / 2;
                default: return true;
                }
            };
            if (key.class_label == 0) {
                auto shape = plus_shape(cfg.glyph_size);
                canvas.paint(gb, glyph_color, &glyph_mask, [&](int x, int y) { return shape(x, y) && visible(x, y); });
            } else {
                auto shape = ring_shape(cfg.glyph_size);
                canvas.paint(gb, glyph_color, &glyph_mask, [&](int x, int y) { return shape(x, y) && visible(x, y); });
            }
            s.masks.emplace(kClassFeature, std::move(glyph_mask));

            for (std::size_t a = 0; a < ds.attributes.size(); ++a) {
                Mask m(cfg.width, cfg.height);
                draw_marker(canvas, static_cast<int>(a), key.instances[a], boxes[1 + a], &m);
                s.masks.emplace(kMarkers[a].feature, std::move(m));
            }
            draw_distractor(canvas, boxes.back(), rng);
            canvas.add_noise(cfg.noise_sigma, rng);
            s.image = std::move(canvas.image());
            ds.samples.push_back(std::move(s));
        }
    }
    ds.reindex();
    return ds;
}

std::vector<ConceptSet> generate_synthetic_concepts(const SyntheticConfig& cfg, int examples_per_side,
                                                    std::uint64_t seed) {
    validate_synthetic_config(cfg);
    if (examples_per_side < 2) throw ConfigError("concept sets need at least 2 examples per side");
    const auto attrs = synthetic_attributes(cfg.attribute_count);

    // Concept images mimic the benchmark's layout minus the class glyph,
    // which is replaced by a second neutral shape.
    auto sizes = feature_sizes(cfg, cfg.attribute_count);
    sizes[0] = {0, 0, cfg.distractor_size, cfg.distractor_size};

    auto render = [&](std::size_t attr, int instance, const std::string& tag, int n,
                      std::map<std::string, std::map<std::string, int>>& tally) {
        std::mt19937_64 rng(derive_seed(seed, tag, std::to_string(n)));
        const auto boxes = place_boxes(sizes, cfg.width, cfg.height, rng);
        Canvas canvas(cfg.width, cfg.height);
        draw_distractor(canvas, boxes[0], rng);
        for (std::size_t a = 0; a < attrs.size(); ++a) {
            const int inst = a == attr ? instance : std::uniform_int_distribution<int>(0, 1)(rng);
            if (a != attr) ++tally[attrs[a].name][attrs[a].instances[inst]];
            draw_marker(canvas, static_cast<int>(a), inst, boxes[1 + a], nullptr);
        }
        draw_distractor(canvas, boxes.back(), rng);
        canvas.add_noise(cfg.noise_sigma, rng);
        return std::move(canvas.image());
    };

    std::vector<ConceptSet> out;
    for (std::size_t a = 0; a < attrs.size(); ++a) {
        for (int inst = 0; inst < 2; ++inst) {
            ConceptSet cs;
            cs.attribute = attrs[a].name;
            cs.instance = attrs[a].instances[inst];
            cs.name = cs.attribute + "=" + cs.instance;
            cs.provenance = fmt::format(
                "synthetic: positives show a {} {}, negatives a {} {}; other markers random, no class glyph",
                cs.instance, kMarkers[a].feature, attrs[a].instances[1 - inst], kMarkers[a].feature);
            std::map<std::string, std::map<std::string, int>> tally;
            const std::string pos_tag = fmt::format("concept/{}/{}", cs.attribute, cs.instance);
            const std::string neg_tag = fmt::format("concept/{}/{}", cs.attribute, attrs[a].instances[1 - inst]);
            for (int n = 0; n < examples_per_side; ++n) cs.positives.push_back(render(a, inst, pos_tag, n, tally));
            for (int n = 0; n < examples_per_side; ++n) {
                // "neg" suffix keeps negatives distinct from the sibling concept's positives
                cs.negatives.push_back(render(a, 1 - inst, neg_tag + "/neg", n, tally));
            }
            cs.composition = tally;
            out.push_back(std::move(cs));
        }
    }
    return out;
}

} // namespace xbias::dataset

namespace xbias::dataset {
namespace {

constexpr std::array<const char*, 7> kTaskShapes{"plus", "ring", "square", "bar", "triangle", "outline_square",
                                                 "diamond"};
constexpr std::array<Rgb, 8> kTaskColors{Rgb{220, 40, 40},  Rgb{40, 80, 220},  Rgb{40, 180, 60},
                                         Rgb{230, 200, 40}, Rgb{200, 60, 200}, Rgb{40, 200, 200},
                                         Rgb{72, 72, 72},   Rgb{176, 176, 176}};
constexpr std::array<const char*, 8> kTaskColorNames{"red", "blue", "green", "yellow", "magenta", "cyan", "dark",
                                                     "light"};

} // namespace

std::vector<std::string> shape_task_labels() {
    std::vector<std::string> out;
    for (auto* s : kTaskShapes) out.emplace_back(std::string("shape:") + s);
    for (auto* c : kTaskColorNames) out.emplace_back(std::string("color:") + c);
    return out;
}

std::vector<ShapeSample> generate_shape_task(int count, int size, std::uint64_t seed) {
    if (size < 24) throw ConfigError("shape task images must be at least 24x24");
    std::vector<ShapeSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int n = 0; n < count; ++n) {
        std::mt19937_64 rng(derive_seed(seed, "shape-task", std::to_string(n)));
        const int shapes = std::uniform_int_distribution<int>(1, 2)(rng);
        std::vector<Box> sizes;
        std::vector<int> kinds, colors;
        for (int s = 0; s < shapes; ++s) {
            const int kind = std::uniform_int_distribution<int>(0, kTaskShapes.size() - 1)(rng);
            const int dim = std::uniform_int_distribution<int>(8, 14)(rng);
            const int h = kind == 3 ? dim / 2 : dim;
            sizes.push_back({0, 0, dim, h});
            kinds.push_back(kind);
            colors.push_back(std::uniform_int_distribution<int>(0, kTaskColors.size() - 1)(rng));
        }
        const auto boxes = place_boxes(sizes, size, size, rng);
        Canvas canvas(size, size);
        ShapeSample sample;
        sample.targets.assign(kTaskShapes.size() + kTaskColors.size(), 0.0);
        for (int s = 0; s < shapes; ++s) {
            const Box& b = boxes[s];
            const Rgb color = kTaskColors[colors[s]];
            switch (kinds[s]) {
            case 0: canvas.paint(b, color, nullptr, plus_shape(b.w)); break;
            case 1: canvas.paint(b, color, nullptr, ring_shape(b.w)); break;
            case 2:
            case 3: canvas.paint(b, color, nullptr, filled); break;
            case 4: canvas.paint(b, color, nullptr, triangle_shape(b.w, b.h)); break;
            case 5: canvas.paint(b, color, nullptr, outline_square(b.w)); break;
            default: canvas.paint(b, color, nullptr, outline_diamond(b.w)); break;
            }
            sample.targets[kinds[s]] = 1.0;
            sample.targets[kTaskShapes.size() + colors[s]] = 1.0;
        }
        canvas.add_noise(12.0, rng);
        sample.image = std::move(canvas.image());
        out.push_back(std::move(sample));
    }
    return out;
}

} // namespace xbias::dataset
