#include <gtest/gtest.h>

#include "support.hpp"
#include "xbias/core/error.hpp"
#include "xbias/dataset/compose.hpp"
#include "xbias/training/model.hpp"

using namespace xbias;
using namespace xbias::training;
using testing_support::small_synthetic;

namespace {

struct Fixture {
    dataset::Dataset ds = dataset::generate_synthetic_dataset(small_synthetic(12));
    nn::Network extractor = build_extractor({{4, 6}, 3}, 17);
    dataset::Split split = dataset::compose_split(ds, {"badge_color", dataset::Ratio::parse("3:1")}, 24, 5);
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

TrainConfig quick_config() {
    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.hidden = 8;
    cfg.batch_size = 8;
    cfg.seed = 99;
    return cfg;
}

metrics::CellGrid<double> weights_for(const std::string& ratio) {
    const dataset::CompositionSpec spec{"badge_color", dataset::Ratio::parse(ratio)};
    metrics::CellGrid<double> w{};
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) w[c][i] = spec.fraction(c, i);
    }
    return w;
}

} // namespace

TEST(Extractor, LayoutAndFrozenBoundary) {
    const auto& f = fixture();
    EXPECT_EQ(f.extractor.layer_names(), (std::vector<std::string>{"conv1", "pool1", "conv2", "gap"}));
    EXPECT_EQ(f.extractor.frozen_layers, f.extractor.size());
    const auto net = attach_head(f.extractor, 8, 1);
    EXPECT_EQ(net.frozen_layers, f.extractor.size());
    EXPECT_EQ(net.layer(net.size() - 1).kind(), "binary_logits");
    EXPECT_EQ(net.extractor_checksum(), f.extractor.extractor_checksum());
    EXPECT_THROW(attach_head(net, 8, 1), ConfigError);
    EXPECT_THROW(build_extractor({{}, 3}, 1), ConfigError);
}

TEST(Extractor, PretrainingReducesLossAndIsDeterministic) {
    PretrainConfig cfg;
    cfg.samples = 96;
    cfg.epochs = 3;
    cfg.seed = 4;
    auto a = build_extractor({{4, 6}, 3}, 1);
    auto b = build_extractor({{4, 6}, 3}, 1);
    const auto ra = pretrain_extractor(a, cfg);
    pretrain_extractor(b, cfg);
    EXPECT_LT(ra.final_loss, ra.initial_loss);
    EXPECT_EQ(a.extractor_checksum(), b.extractor_checksum());
    EXPECT_EQ(a.frozen_layers, a.size());
}

TEST(Train, ExtractorIsBitIdenticalAfterTraining) {
    const auto& f = fixture();
    const auto before = f.extractor.extractor_checksum();
    const auto r = train_model(f.extractor, f.ds, f.split.train_ids, quick_config());
    EXPECT_EQ(r.report.extractor_checksum_before, before);
    EXPECT_EQ(r.report.extractor_checksum_after, before);
    EXPECT_EQ(r.model.extractor_checksum(), before);
    EXPECT_GE(r.report.train_accuracy, 0.0);
    EXPECT_LE(r.report.train_accuracy, 100.0);
}

TEST(Train, DeterministicAndCacheTransparent) {
    const auto& f = fixture();
    const auto cache = compute_features(f.extractor, f.ds);
    const auto a = train_model(f.extractor, f.ds, f.split.train_ids, quick_config());
    const auto b = train_model(f.extractor, f.ds, f.split.train_ids, quick_config(), &cache);
    const auto& na = a.model.network();
    const auto& nb = b.model.network();
    EXPECT_EQ(na.checksum(0, na.size()), nb.checksum(0, nb.size()));
    auto other = quick_config();
    other.seed = 100;
    const auto c = train_model(f.extractor, f.ds, f.split.train_ids, other, &cache);
    EXPECT_NE(c.model.network().checksum(0, na.size()), na.checksum(0, na.size()));
}

TEST(Train, FeatureCacheMatchesModelFeatures) {
    const auto& f = fixture();
    const auto cache = compute_features(f.extractor, f.ds);
    const Model m(attach_head(f.extractor, 4, 2));
    for (const auto& id : {f.ds.samples[0].id, f.ds.samples[50].id}) {
        EXPECT_EQ(cache.at(id).values, m.features(f.ds.sample(id).image).values);
        EXPECT_EQ(m.logits(f.ds.sample(id).image).values, m.logits_from_features(cache.at(id)).values);
    }
}

TEST(Train, RequiresBothClasses) {
    const auto& f = fixture();
    std::vector<std::string> one_class;
    for (const auto& s : f.ds.samples) {
        if (s.class_label == 0) one_class.push_back(s.id);
    }
    EXPECT_THROW(train_model(f.extractor, f.ds, one_class, quick_config()), TrainingError);
}

TEST(Train, DivergenceReportsConfig) {
    const auto& f = fixture();
    auto cfg = quick_config();
    cfg.learning_rate = 1e300;
    try {
        train_model(f.extractor, f.ds, f.split.train_ids, cfg);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos);
    }
    cfg.learning_rate = -1;
    EXPECT_THROW(train_model(f.extractor, f.ds, f.split.train_ids, cfg), ConfigError);
}

TEST(Evaluate, OracleScoresHundredEverywhere) {
    const auto& f = fixture();
    std::map<std::string, int> truth;
    for (const auto& id : f.split.test_ids) truth[id] = f.ds.sample(id).class_label;
    const auto t = accuracy_from_predictions(f.ds, truth, f.split.test_ids, "badge_color", weights_for("3:1"), "3:1");
    for (const auto& row : t.accuracy) {
        for (const auto& a : row) EXPECT_EQ(*a, 100.0);
    }
    EXPECT_EQ(*t.avg(), 100.0);
    EXPECT_EQ(*t.w_bias(), 100.0);
}

TEST(Evaluate, FlippingLabelsComplementsAccuracy) {
    const auto& f = fixture();
    const auto r = train_model(f.extractor, f.ds, f.split.train_ids, quick_config());
    auto preds = predict_all(r.model, f.ds, f.split.test_ids);
    const auto t = accuracy_from_predictions(f.ds, preds, f.split.test_ids, "badge_color", weights_for("3:1"), "3:1");
    for (auto& [id, p] : preds) p = 1 - p;
    const auto flipped =
        accuracy_from_predictions(f.ds, preds, f.split.test_ids, "badge_color", weights_for("3:1"), "3:1");
    for (int c = 0; c < 2; ++c) {
        for (int i = 0; i < 2; ++i) {
            EXPECT_NEAR(*flipped.accuracy[c][i], 100.0 - *t.accuracy[c][i], 1e-9);
            EXPECT_EQ(t.tested[c][i], static_cast<long>(f.split.test_ids.size() / 4));
        }
    }
    const auto direct = evaluate_subgroups(r.model, f.ds, f.split.test_ids, "badge_color", weights_for("3:1"), "3:1");
    EXPECT_EQ(direct.accuracy, t.accuracy);
}

TEST(Evaluate, EmptySubgroupIsAnError) {
    const auto& f = fixture();
    std::vector<std::string> ids;
    std::map<std::string, int> preds;
    for (const auto& id : f.split.test_ids) {
        if (f.ds.sample(id).attributes.at("badge_color") == "red") {
            ids.push_back(id);
            preds[id] = 0;
        }
    }
    EXPECT_THROW(accuracy_from_predictions(f.ds, preds, ids, "badge_color", weights_for("1:1"), "1:1"),
                 ValidationError);
}

TEST(Evaluate, JointAccuracyCoversEverySubgroup) {
    const auto& f = fixture();
    std::map<std::string, int> truth;
    for (const auto& id : f.split.test_ids) truth[id] = f.ds.sample(id).class_label;
    const auto joint = joint_accuracy(f.ds, truth, f.split.test_ids);
    EXPECT_EQ(joint.size(), 8u);
    for (const auto& [key, a] : joint) EXPECT_EQ(a, 100.0);
}

TEST(Predict, TiesGoToClassZero) {
    nn::Tensor z({2, 1, 1});
    z.values = {0.5, 0.5};
    EXPECT_EQ(argmax2(z), 0);
    z.values = {0.5, 0.6};
    EXPECT_EQ(argmax2(z), 1);
}
