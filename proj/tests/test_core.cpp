#include <gtest/gtest.h>

#include <set>

#include "support.hpp"
#include "xbias/core/error.hpp"
#include "xbias/core/image.hpp"
#include "xbias/core/seed.hpp"

using namespace xbias;

TEST(Seed, DeriveIsPureAndScoped) {
    EXPECT_EQ(derive_seed(1, "3:1", "train"), derive_seed(1, "3:1", "train"));
    EXPECT_NE(derive_seed(1, "3:1", "train"), derive_seed(2, "3:1", "train"));
    EXPECT_NE(derive_seed(1, "3:1", "train"), derive_seed(1, "1:3", "train"));
    EXPECT_NE(derive_seed(1, "3:1", "train"), derive_seed(1, "3:1", "split"));
    EXPECT_NE(derive_seed(1, "ab", "c"), derive_seed(1, "a", "bc"));
}

TEST(Seed, PrioritiesSpread) {
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) seen.insert(item_priority(3, "item" + std::to_string(i)));
    EXPECT_EQ(seen.size(), 1000u);
    EXPECT_EQ(item_priority(3, "x"), item_priority(3, "x"));
}

TEST(Png, RgbRoundTrip) {
    testing_support::TempDir dir;
    Image img(5, 4, 3);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
    write_png(dir / "a.png", img);
    EXPECT_EQ(read_png(dir / "a.png"), img);
}

TEST(Png, MaskRoundTrip) {
    testing_support::TempDir dir;
    Mask m(6, 3);
    m.at(1, 1) = 1;
    m.at(5, 2) = 1;
    write_mask_png(dir / "m.png", m);
    const Mask back = read_mask_png(dir / "m.png");
    EXPECT_EQ(back, m);
    EXPECT_EQ(back.count(), 2u);
}

TEST(Png, UnitMapIsLosslessAtSixteenBits) {
    testing_support::TempDir dir;
    std::vector<double> v{0.0, 0.25, 0.5, 1.0, 0.123456, 0.999};
    write_unit_map_png16(dir / "u.png", 3, 2, v);
    int w = 0, h = 0;
    const auto back = read_unit_map_png16(dir / "u.png", w, h);
    ASSERT_EQ(back.size(), v.size());
    EXPECT_EQ(w, 3);
    EXPECT_EQ(h, 2);
    for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back[i], v[i], 1.0 / 65535);
}

TEST(Png, MissingFileThrows) {
    EXPECT_THROW(read_png("/nonexistent/x.png"), Error);
}
