#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "pgcr/metrics.hpp"
#include "pgcr/rng.hpp"

using namespace pgcr;

namespace {

ImageU8 random_image(std::size_t w, std::size_t h, std::uint64_t seed) {
    ImageU8 img = ImageU8::make(w, h);
    Rng rng(seed);
    for (auto& v : img.values) v = static_cast<std::uint8_t>(rng.below(256));
    return img;
}

// Deterministic integer pixel pattern; also used to freeze reference values
// computed with an independent SSIM implementation.
ImageU8 pattern(std::size_t w, std::size_t h, std::uint32_t salt) {
    ImageU8 img = ImageU8::make(w, h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) {
                std::uint32_t v = static_cast<std::uint32_t>(x) * 2654435761u +
                                  static_cast<std::uint32_t>(y) * 40503u +
                                  static_cast<std::uint32_t>(c) * 97u + salt * 131071u;
                v = (v ^ (v >> 13)) * 1274126177u;
                img.at(y, x, c) = static_cast<std::uint8_t>((v >> 8) & 0xFF);
            }
    return img;
}

}  // namespace

TEST_CASE("image_mse agrees with a brute-force loop") {
    ImageU8 x = random_image(20, 14, 1);
    ImageU8 y = random_image(20, 14, 2);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const double d = double(x.values[i]) - double(y.values[i]);
        acc += d * d;
    }
    CHECK_THAT(image_mse(x, y), Catch::Matchers::WithinRel(acc / double(x.values.size()), 1e-12));
    CHECK(image_mse(x, x) == 0.0);
    CHECK_THROWS_AS(image_mse(x, random_image(10, 14, 3)), ShapeError);
}

TEST_CASE("psnr of an identical pair is the infinity sentinel") {
    ImageU8 x = random_image(16, 16, 4);
    CHECK(std::isinf(psnr(x, x)));
    CHECK(psnr(x, x) > 0);
}

TEST_CASE("psnr of a constant offset of 16 is 24.0484 dB") {
    ImageU8 x = ImageU8::make(32, 32);
    ImageU8 y = ImageU8::make(32, 32);
    std::fill(x.values.begin(), x.values.end(), std::uint8_t(100));
    std::fill(y.values.begin(), y.values.end(), std::uint8_t(116));
    // MSE = 256 -> 10 log10(255^2/256).
    CHECK_THAT(psnr(x, y), Catch::Matchers::WithinAbs(24.0484, 1e-3));
    CHECK_THAT(psnr(x, y), Catch::Matchers::WithinAbs(10.0 * std::log10(65025.0 / 256.0), 1e-9));
}

TEST_CASE("ssim of an image with itself is one") {
    ImageU8 x = random_image(16, 16, 5);
    CHECK_THAT(ssim(x, x), Catch::Matchers::WithinAbs(1.0, 1e-9));
    ImageU8 big = random_image(40, 24, 6);
    CHECK_THAT(ssim(big, big), Catch::Matchers::WithinAbs(1.0, 1e-9));
}

TEST_CASE("ssim matches frozen values from an independent reference implementation") {
    // References computed with scikit-image structural_similarity
    // (win_size=11, gaussian_weights=True, sigma=1.5,
    //  use_sample_covariance=False, data_range=255, channel averaging).
    ImageU8 a16 = pattern(16, 16, 1);
    ImageU8 b16 = pattern(16, 16, 2);
    CHECK_THAT(ssim(a16, b16), Catch::Matchers::WithinAbs(-0.188110901273, 1e-6));

    ImageU8 c24 = pattern(24, 24, 3);
    ImageU8 d24 = pattern(24, 24, 4);
    CHECK_THAT(ssim(c24, d24), Catch::Matchers::WithinAbs(-0.197274815054, 1e-6));

    ImageU8 e16 = a16;
    for (auto& v : e16.values) v = static_cast<std::uint8_t>(std::min(255, int(v) + 8));
    CHECK_THAT(ssim(a16, e16), Catch::Matchers::WithinAbs(0.998156691712, 1e-6));
}

TEST_CASE("ssim of flat black versus flat white follows the closed form") {
    ImageU8 black = ImageU8::make(16, 16);
    ImageU8 white = ImageU8::make(16, 16);
    std::fill(white.values.begin(), white.values.end(), std::uint8_t(255));
    // Luminance term C1/(255^2+C1); contrast and structure terms are exactly 1.
    const double expected = kSsimC1 / (65025.0 + kSsimC1);
    CHECK_THAT(ssim(black, white), Catch::Matchers::WithinAbs(expected, 1e-9));
}

TEST_CASE("ssim is invariant to a simultaneous horizontal flip") {
    ImageU8 x = random_image(20, 16, 7);
    ImageU8 y = random_image(20, 16, 8);
    auto flip = [](const ImageU8& img) {
        ImageU8 out = img;
        for (std::size_t yy = 0; yy < img.height; ++yy)
            for (std::size_t xx = 0; xx < img.width; ++xx)
                for (std::size_t c = 0; c < 3; ++c)
                    out.at(yy, xx, c) = img.at(yy, img.width - 1 - xx, c);
        return out;
    };
    CHECK_THAT(ssim(flip(x), flip(y)), Catch::Matchers::WithinAbs(ssim(x, y), 1e-12));
}

TEST_CASE("ssim degrades monotonically with noise amplitude") {
    ImageU8 base = random_image(24, 24, 9);
    double prev = 1.0;
    for (int amp : {4, 16, 48}) {
        ImageU8 noisy = base;
        Rng rng(10);
        for (auto& v : noisy.values) {
            const int delta = int(rng.below(2 * amp + 1)) - amp;
            v = static_cast<std::uint8_t>(std::clamp(int(v) + delta, 0, 255));
        }
        const double s = ssim(base, noisy);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("ssim requires at least one full window") {
    ImageU8 tiny = random_image(8, 8, 11);
    CHECK_THROWS_AS(ssim(tiny, tiny), ShapeError);
    ImageU8 exact = random_image(11, 11, 12);
    CHECK_NOTHROW(ssim(exact, exact));
}

TEST_CASE("metric summaries exclude infinite rows from the mean") {
    std::vector<MetricRow> rows;
    rows.push_back({"a", 20.0, 0.5});
    rows.push_back({"b", std::numeric_limits<double>::infinity(), 1.0});
    rows.push_back({"c", 30.0, 0.7});
    MetricReport rep = summarize_metrics(std::move(rows));
    CHECK(rep.inf_psnr_count == 1);
    CHECK_THAT(rep.mean_psnr, Catch::Matchers::WithinAbs(25.0, 1e-12));
    CHECK_THAT(rep.mean_ssim, Catch::Matchers::WithinAbs((0.5 + 1.0 + 0.7) / 3.0, 1e-12));
}

TEST_CASE("csv and json reports carry rows plus means") {
    std::vector<MetricRow> rows;
    rows.push_back({"0001", 20.0, 0.5});
    rows.push_back({"0002", std::numeric_limits<double>::infinity(), 1.0});
    MetricReport rep = summarize_metrics(std::move(rows));

    const std::string csv = metric_csv(rep);
    CHECK(csv.find("id,psnr,ssim\n") == 0);
    CHECK(csv.find("0001,20.000000,0.500000") != std::string::npos);
    CHECK(csv.find("inf") != std::string::npos);
    CHECK(csv.find("mean,") != std::string::npos);

    const std::string json = metric_json(rep);
    CHECK(json.find("\"rows\"") != std::string::npos);
    CHECK(json.find("null") != std::string::npos);  // infinity serialized as null
    CHECK(json.find("\"mean_psnr\"") != std::string::npos);
}
