#pragma once

#include <array>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "xbias/dataset/synthetic.hpp"
#include "xbias/gradcam/gradcam.hpp"
#include "xbias/nn/network.hpp"

namespace testing_support {

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("xbias-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

inline xbias::dataset::SyntheticConfig small_synthetic(int per_subgroup = 8, int attributes = 2,
                                                       std::uint64_t seed = 7) {
    xbias::dataset::SyntheticConfig cfg;
    cfg.per_subgroup = per_subgroup;
    cfg.attribute_count = attributes;
    cfg.seed = seed;
    return cfg;
}

inline void randomize(xbias::nn::Network& net, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0, scale);
    for (std::size_t i = 0; i < net.size(); ++i) {
        for (double& p : net.layer(i).params()) p = n(rng);
    }
}

inline xbias::nn::Tensor random_tensor(xbias::nn::Shape shape, std::mt19937_64& rng, double scale = 0.5) {
    xbias::nn::Tensor t(shape);
    std::uniform_real_distribution<double> u(-scale, scale);
    for (double& v : t.values) v = u(rng);
    return t;
}

/// One binary attribute, `per_cell` samples per (class, instance), 8x8
/// images with a "face" mask in the top-left quadrant.
inline xbias::dataset::Dataset count_dataset(int per_cell) {
    xbias::dataset::Dataset ds;
    ds.attributes = {{"gender", {"male", "female"}, {"face"}}};
    ds.class_names = {"doctor", "nurse"};
    int n = 0;
    for (int c = 0; c < 2; ++c) {
        for (const char* g : {"male", "female"}) {
            for (int k = 0; k < per_cell; ++k) {
                xbias::dataset::SampleRecord s;
                char id[16];
                std::snprintf(id, sizeof id, "d%04d", n++);
                s.id = id;
                s.class_label = c;
                s.attributes["gender"] = g;
                s.image = xbias::Image(8, 8, 3, 100);
                xbias::Mask m(8, 8);
                for (int y = 0; y < 4; ++y) {
                    for (int x = 0; x < 4; ++x) m.at(x, y) = 1;
                }
                s.masks["face"] = m;
                ds.samples.push_back(std::move(s));
            }
        }
    }
    ds.reindex();
    return ds;
}

/// Auto-judged records realising {incorrect with bias, bias} per cell
/// (cells ordered class0/A, class0/B, class1/A, class1/B); the remaining
/// records are unbiased, a few of them mispredicted.
inline std::vector<xbias::gradcam::ExplanationRecord> records_for_counts(
    const xbias::dataset::Dataset& ds, const std::array<std::array<long, 2>, 4>& cells) {
    using namespace xbias;
    std::array<long, 4> seen{};
    std::vector<gradcam::ExplanationRecord> out;
    for (const auto& s : ds.samples) {
        const int inst = ds.attributes[0].instance_index(s.attributes.at("gender"));
        const int cell = s.class_label * 2 + inst;
        const long k = seen[cell]++;
        gradcam::ExplanationRecord r;
        r.sample_id = s.id;
        const bool biased = k < cells[cell][1];
        const bool wrong = biased ? k < cells[cell][0] : k % 7 == 3;
        r.predicted = wrong ? 1 - s.class_label : s.class_label;
        r.correct = !wrong;
        r.saliency.width = r.saliency.height = 8;
        r.saliency.values.assign(64, 0.0);
        r.saliency.values[biased ? 0 : 63] = 1.0;
        r.saliency.layer = "conv";
        gradcam::BiasVerdict v;
        v.biased = biased;
        v.overlap = biased ? 1.0 : 0.0;
        if (biased) {
            v.attribute = "gender";
            v.feature = "face";
        }
        r.verdict = v;
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace testing_support
