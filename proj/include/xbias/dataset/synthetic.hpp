#pragma once

#include <cstdint>

#include "xbias/dataset/concepts.hpp"
#include "xbias/dataset/types.hpp"

namespace xbias::dataset {

/// Parameters of the synthetic biased-attribute benchmark. Every image
/// carries one class glyph (cross for class 0, ring for class 1), one
/// colored marker per attribute and one neutral distractor shape, all at
/// random non-overlapping positions.
struct SyntheticConfig {
    int per_subgroup = 200;
    int width = 64;
    int height = 64;
    int attribute_count = 2; ///< 1..3
    std::uint64_t seed = 0;

    int glyph_size = 12;
    int marker_size = 14;
    int distractor_size = 10;
    int glyph_gray = 30;           ///< glyph stroke value on a ~128 background
    double noise_sigma = 12.0;
    /// Fraction of samples whose class glyph is faded and partly covered,
    /// which makes the class feature weaker than the attribute markers.
    double occluded_fraction = 0.3;
    double occluded_visibility = 0.25; ///< stroke contrast kept when occluded
};

/// Name of the class-feature mask in every synthetic sample.
inline constexpr const char* kClassFeature = "glyph";

/// Attribute specs used by the generator (first `count` of a fixed table).
std::vector<AttributeSpec> synthetic_attributes(int count);

/// Throws ConfigError if the features cannot be placed without overlap.
void validate_synthetic_config(const SyntheticConfig& cfg);

Dataset generate_synthetic_dataset(const SyntheticConfig& cfg);

/// Concept sets for every (attribute, instance): positives show that
/// instance's marker, negatives the opposite instance; both carry a neutral
/// shape and random markers of the other attributes, never a class glyph.
std::vector<ConceptSet> generate_synthetic_concepts(const SyntheticConfig& cfg, int examples_per_side,
                                                    std::uint64_t seed);

} // namespace xbias::dataset

namespace xbias::dataset {

/// One image of the auxiliary shape-recognition task used to pretrain the
/// frozen feature extractor. `targets` is multi-hot over
/// shape_task_labels().
struct ShapeSample {
    Image image;
    std::vector<double> targets;
};

std::vector<std::string> shape_task_labels();
std::vector<ShapeSample> generate_shape_task(int count, int size, std::uint64_t seed);

} // namespace xbias::dataset
