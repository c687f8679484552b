#include <catch2/catch_amalgamated.hpp>

#include <unistd.h>

#include <filesystem>

#include "pgcr/checkpoint.hpp"
#include "pgcr/data.hpp"

using namespace pgcr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("pgcr_ckpt_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

RunConfig toy_config() {
    RunConfig c;
    apply_preset(c, "toy");
    c.disc_hidden = {16, 8};
    return c;
}

}  // namespace

TEST_CASE("a generator checkpoint survives a bit-identical round trip") {
    TempDir dir("gen_rt");
    const RunConfig cfg = toy_config();
    GeneratorModel model = init_generator(cfg.generator_config(), 31);
    Checkpoint ck = generator_checkpoint(model, cfg);
    const std::string path = dir.file("model.pgcr");
    save_checkpoint(path, ck);

    // identical bytes on a second save
    const std::string path2 = dir.file("model2.pgcr");
    save_checkpoint(path2, ck);
    CHECK(read_text_file(path) == read_text_file(path2));

    Checkpoint back = load_checkpoint(path);
    CHECK(back.kind == "generator");
    CHECK(back.version == kCheckpointVersion);
    CHECK(back.config_text == ck.config_text);
    REQUIRE(back.tensors.size() == ck.tensors.size());
    for (std::size_t i = 0; i < back.tensors.size(); ++i) {
        CHECK(back.tensors[i].first == ck.tensors[i].first);
        CHECK(back.tensors[i].second.shape() == ck.tensors[i].second.shape());
        CHECK(back.tensors[i].second.data() == ck.tensors[i].second.data());
    }
}

TEST_CASE("a reloaded generator produces bit-identical outputs") {
    TempDir dir("gen_fwd");
    const RunConfig cfg = toy_config();
    GeneratorModel model = init_generator(cfg.generator_config(), 55);
    const std::string path = dir.file("model.pgcr");
    save_checkpoint(path, generator_checkpoint(model, cfg));
    GeneratorModel back = generator_from_checkpoint(load_checkpoint(path));

    CloudParamsRange params;
    ImagePair pair = synth_pair(64, 0.4, params, 99, "x");
    Tensor input = normalize<float>(pair.cloudy);
    NoGradGuard guard;
    Tensor a = generate(model, input, false);
    Tensor b = generate(back, input, false);
    CHECK(a.data() == b.data());
}

TEST_CASE("a reloaded discriminator produces bit-identical scores") {
    TempDir dir("disc_fwd");
    const RunConfig cfg = toy_config();
    DiscriminatorModel model = init_discriminator(cfg.discriminator_config(), 77);
    const std::string path = dir.file("disc.pgcr");
    save_checkpoint(path, discriminator_checkpoint(model, cfg));
    DiscriminatorModel back = discriminator_from_checkpoint(load_checkpoint(path));

    Tensor patches = Tensor::zeros({64, 192});
    Rng rng(5);
    for (auto& v : patches.data()) v = static_cast<float>(rng.uniform());
    NoGradGuard guard;
    Tensor a = discriminate(model, patches);
    Tensor b = discriminate(back, patches);
    CHECK(a.data() == b.data());
}

TEST_CASE("corrupted checkpoints are rejected with data errors") {
    TempDir dir("corrupt");
    const RunConfig cfg = toy_config();
    GeneratorModel model = init_generator(cfg.generator_config(), 3);
    const std::string path = dir.file("model.pgcr");
    save_checkpoint(path, generator_checkpoint(model, cfg));
    const std::string good = read_text_file(path);

    SECTION("bad magic") {
        std::string bad = good;
        bad[0] = 'X';
        write_text_file(dir.file("bad.pgcr"), bad);
        CHECK_THROWS_AS(load_checkpoint(dir.file("bad.pgcr")), DataError);
        CHECK_THROWS_WITH(load_checkpoint(dir.file("bad.pgcr")),
                          Catch::Matchers::ContainsSubstring("magic"));
    }
    SECTION("unsupported version") {
        std::string bad = good;
        bad[4] = 9;  // little-endian u32 version field
        write_text_file(dir.file("bad.pgcr"), bad);
        CHECK_THROWS_WITH(load_checkpoint(dir.file("bad.pgcr")),
                          Catch::Matchers::ContainsSubstring("version"));
    }
    SECTION("unknown kind tag") {
        std::string bad = good;
        bad[8] = 7;
        write_text_file(dir.file("bad.pgcr"), bad);
        CHECK_THROWS_WITH(load_checkpoint(dir.file("bad.pgcr")),
                          Catch::Matchers::ContainsSubstring("kind"));
    }
    SECTION("truncation at every interesting boundary") {
        for (std::size_t keep : {2ul, 11ul, 40ul, good.size() / 2, good.size() - 1}) {
            write_text_file(dir.file("bad.pgcr"), good.substr(0, keep));
            CHECK_THROWS_AS(load_checkpoint(dir.file("bad.pgcr")), DataError);
        }
    }
    SECTION("trailing bytes") {
        write_text_file(dir.file("bad.pgcr"), good + "zz");
        CHECK_THROWS_WITH(load_checkpoint(dir.file("bad.pgcr")),
                          Catch::Matchers::ContainsSubstring("trailing"));
    }
    SECTION("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir.file("missing.pgcr")), DataError);
    }
}

TEST_CASE("kind mismatches are refused at model construction") {
    TempDir dir("kind");
    const RunConfig cfg = toy_config();
    GeneratorModel gen = init_generator(cfg.generator_config(), 3);
    DiscriminatorModel disc = init_discriminator(cfg.discriminator_config(), 4);
    save_checkpoint(dir.file("gen.pgcr"), generator_checkpoint(gen, cfg));
    save_checkpoint(dir.file("disc.pgcr"), discriminator_checkpoint(disc, cfg));

    CHECK_THROWS_AS(generator_from_checkpoint(load_checkpoint(dir.file("disc.pgcr"))), DataError);
    CHECK_THROWS_AS(discriminator_from_checkpoint(load_checkpoint(dir.file("gen.pgcr"))),
                    DataError);
}

TEST_CASE("tensor name and shape mismatches are reported") {
    const RunConfig cfg = toy_config();
    GeneratorModel model = init_generator(cfg.generator_config(), 3);
    Checkpoint ck = generator_checkpoint(model, cfg);

    SECTION("renamed tensor") {
        ck.tensors[2].first += "_typo";
        GeneratorModel fresh = init_generator(cfg.generator_config(), 0);
        CHECK_THROWS_AS(detail::fill_params_from_checkpoint(fresh, ck, "test"), DataError);
    }
    SECTION("dropped tensor") {
        ck.tensors.pop_back();
        GeneratorModel fresh = init_generator(cfg.generator_config(), 0);
        CHECK_THROWS_WITH(detail::fill_params_from_checkpoint(fresh, ck, "test"),
                          Catch::Matchers::ContainsSubstring("tensors"));
    }
    SECTION("reshaped tensor") {
        ck.tensors[0].second = Tensor::zeros({2, 2});
        GeneratorModel fresh = init_generator(cfg.generator_config(), 0);
        CHECK_THROWS_WITH(detail::fill_params_from_checkpoint(fresh, ck, "test"),
                          Catch::Matchers::ContainsSubstring("shape"));
    }
}

TEST_CASE("the config snapshot restores the architecture it was saved with") {
    TempDir dir("arch");
    RunConfig cfg = toy_config();
    cfg.enc_depth = 3;  // non-default depth must survive
    GeneratorModel model = init_generator(cfg.generator_config(), 12);
    save_checkpoint(dir.file("m.pgcr"), generator_checkpoint(model, cfg));
    Checkpoint ck = load_checkpoint(dir.file("m.pgcr"));
    const RunConfig back = checkpoint_config(ck);
    CHECK(back.enc_depth == 3);
    GeneratorModel rebuilt = generator_from_checkpoint(ck);
    CHECK(named_params(rebuilt).size() == named_params(model).size());
}
