#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "gradient_check.hpp"
#include "support.hpp"
#include "xbias/core/error.hpp"
#include "xbias/nn/adam.hpp"
#include "xbias/nn/layers.hpp"
#include "xbias/nn/network.hpp"

using namespace xbias;
using namespace xbias::nn;
using testing_support::central_difference;
using testing_support::kRelativeTolerance;
using testing_support::relative_error;

namespace {

// loss = sum_k r_k * out_k for a fixed random r, so dL/dout = r
struct Probe {
    Tensor r;
    double loss(const Layer& layer, const Tensor& in) const {
        Tensor out;
        layer.forward(in, out);
        double s = 0;
        for (std::size_t k = 0; k < out.size(); ++k) s += r.values[k] * out.values[k];
        return s;
    }
};

void check_layer(Layer& layer, Shape in_shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor in = testing_support::random_tensor(in_shape, rng);
    for (double& p : layer.params()) p = std::normal_distribution<double>(0, 0.4)(rng);
    Probe probe{testing_support::random_tensor(layer.output_shape(in_shape), rng, 1.0)};

    Tensor out;
    layer.forward(in, out);
    Tensor grad_in;
    std::vector<double> pg(layer.params().size(), 0.0);
    layer.backward(in, out, probe.r, &grad_in, pg);

    auto f = [&] { return probe.loss(layer, in); };
    for (std::size_t i = 0; i < in.size(); ++i) {
        const double num = central_difference(f, in.values[i]);
        EXPECT_LT(relative_error(grad_in.values[i], num), kRelativeTolerance) << layer.name() << " input " << i;
    }
    auto params = layer.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double num = central_difference(f, params[i]);
        EXPECT_LT(relative_error(pg[i], num), kRelativeTolerance) << layer.name() << " param " << i;
    }
}

Network small_net(std::uint64_t seed) {
    Network net;
    net.add(std::make_unique<Conv2d>("conv1", 3, 4, 3, true));
    net.add(std::make_unique<AvgPool2>("pool1"));
    net.add(std::make_unique<Conv2d>("conv2", 4, 3, 3, false));
    net.add(std::make_unique<GlobalAvgPool>("gap"));
    net.add(std::make_unique<Linear>("fc", 3, 5));
    net.add(std::make_unique<Relu>("fc_relu"));
    net.add(std::make_unique<Linear>("score", 5, 1));
    net.add(std::make_unique<BinaryLogits>("logits"));
    net.frozen_layers = 4;
    testing_support::randomize(net, seed);
    return net;
}

} // namespace

TEST(LayerGradients, Conv) {
    Conv2d plain("c", 2, 3, 3, false);
    check_layer(plain, {2, 5, 6}, 1);
    Conv2d fused("r", 2, 2, 3, true);
    check_layer(fused, {2, 4, 4}, 2);
    Conv2d pointwise("p", 3, 2, 1, false);
    check_layer(pointwise, {3, 3, 3}, 3);
}

TEST(LayerGradients, PoolingReluLinearLogits) {
    AvgPool2 pool("pool");
    check_layer(pool, {2, 6, 4}, 4);
    GlobalAvgPool gap("gap");
    check_layer(gap, {3, 4, 5}, 5);
    Relu relu("relu");
    check_layer(relu, {1, 1, 9}, 6);
    Linear fc("fc", 6, 4);
    check_layer(fc, {6, 1, 1}, 7);
    BinaryLogits logits("logits");
    check_layer(logits, {1, 1, 1}, 8);
}

TEST(BinaryLogits, AntisymmetricPair) {
    BinaryLogits l("z");
    Tensor in({1, 1, 1});
    in.values[0] = 3.0;
    Tensor out;
    l.forward(in, out);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_DOUBLE_EQ(out.values[0], -1.5);
    EXPECT_DOUBLE_EQ(out.values[1], 1.5);
    EXPECT_THROW(l.output_shape({2, 1, 1}), Error);
}

TEST(Network, BackwardMatchesFiniteDifferences) {
    auto net = small_net(9);
    std::mt19937_64 rng(10);
    const Tensor x = testing_support::random_tensor({3, 8, 8}, rng);
    Tensor g({2, 1, 1});
    g.values = {0.3, -1.1};
    const auto outs = net.trace_from(0, x);
    auto grads = net.make_grads();
    Tensor grad_x;
    net.backward(0, x, outs, g, &grads, &grad_x);
    auto f = [&] {
        const auto z = net.forward(x);
        return g.values[0] * z.values[0] + g.values[1] * z.values[1];
    };
    Tensor xm = x;
    auto fx = [&] {
        const auto z = net.forward(xm);
        return g.values[0] * z.values[0] + g.values[1] * z.values[1];
    };
    for (std::size_t i = 0; i < xm.size(); i += 7) {
        EXPECT_LT(relative_error(grad_x.values[i], central_difference(fx, xm.values[i])), kRelativeTolerance);
    }
    for (std::size_t l = 0; l < net.size(); ++l) {
        auto params = net.layer(l).params();
        for (std::size_t i = 0; i < params.size(); i += 3) {
            EXPECT_LT(relative_error(grads[l][i], central_difference(f, params[i])), kRelativeTolerance)
                << net.layer(l).name() << " " << i;
        }
    }
}

TEST(Network, GradientWrtOutputMatchesFiniteDifferences) {
    auto net = small_net(12);
    std::mt19937_64 rng(13);
    const Tensor x = testing_support::random_tensor({3, 8, 8}, rng);
    const auto outs = net.trace(x);
    const std::size_t li = net.index_of("conv2");
    Tensor g({2, 1, 1});
    g.values = {0.0, 1.0};
    const auto grad = net.gradient_wrt_output(li, outs[li], g);
    Tensor act = outs[li];
    auto f = [&] { return net.forward_from(li + 1, act).values[1]; };
    for (std::size_t i = 0; i < act.size(); ++i) {
        EXPECT_LT(relative_error(grad.values[i], central_difference(f, act.values[i])), kRelativeTolerance);
    }
}

TEST(Network, TraceAgreesWithForward) {
    const auto net = small_net(1);
    std::mt19937_64 rng(2);
    const Tensor x = testing_support::random_tensor({3, 8, 8}, rng);
    const auto outs = net.trace(x);
    EXPECT_EQ(outs.back().values, net.forward(x).values);
    EXPECT_EQ(net.forward_from(3, outs[2]).values, outs.back().values);
    EXPECT_EQ(net.output_shape({3, 8, 8}), (Shape{2, 1, 1}));
}

TEST(Network, RejectsDuplicateAndUnknownNames) {
    Network net;
    net.add(std::make_unique<Relu>("a"));
    EXPECT_THROW(net.add(std::make_unique<Relu>("a")), Error);
    EXPECT_THROW(net.index_of("zzz"), Error);
    EXPECT_THROW(make_layer("lstm", "x", {}), Error);
}

TEST(Checkpoint, RoundTripIsExact) {
    testing_support::TempDir dir;
    const auto net = small_net(21);
    save_checkpoint(dir / "m.ckpt", net);
    const auto back = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(back.layer_names(), net.layer_names());
    EXPECT_EQ(back.frozen_layers, net.frozen_layers);
    EXPECT_EQ(back.checksum(0, back.size()), net.checksum(0, net.size()));
    std::mt19937_64 rng(2);
    const Tensor x = testing_support::random_tensor({3, 8, 8}, rng);
    EXPECT_EQ(back.forward(x).values, net.forward(x).values);
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
    testing_support::TempDir dir;
    {
        std::ofstream(dir / "junk.ckpt") << "hello";
    }
    EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), Error);
    save_checkpoint(dir / "m.ckpt", small_net(1));
    std::filesystem::resize_file(dir / "m.ckpt", std::filesystem::file_size(dir / "m.ckpt") - 16);
    EXPECT_THROW(load_checkpoint(dir / "m.ckpt"), Error);
}

TEST(Adam, LeavesFrozenLayersUntouched) {
    auto net = small_net(31);
    const auto frozen_before = net.checksum(0, net.frozen_layers);
    const auto head_before = net.checksum(net.frozen_layers, net.size());
    Adam adam(net, net.frozen_layers, 0.1);
    auto grads = net.make_grads();
    for (auto& g : grads) std::fill(g.begin(), g.end(), 1.0);
    adam.step(net, grads);
    EXPECT_EQ(net.checksum(0, net.frozen_layers), frozen_before);
    EXPECT_NE(net.checksum(net.frozen_layers, net.size()), head_before);
}

TEST(Tensor, PixelMapping) {
    Image img(2, 1, 3);
    img.at(0, 0, 0) = 0;
    img.at(1, 0, 2) = 255;
    const auto t = to_tensor(img);
    EXPECT_EQ(t.shape, (Shape{3, 1, 2}));
    EXPECT_DOUBLE_EQ(t.at(0, 0, 0), -0.5);
    EXPECT_DOUBLE_EQ(t.at(2, 0, 1), 0.5);
}
