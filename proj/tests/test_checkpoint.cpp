#include "doctest.h"
#include "motiondiff/checkpoint.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

using namespace motiondiff;

namespace {

struct TempDir {
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("motiondiff_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
    std::filesystem::path path;
    static inline int counter = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("round trip preserves names, shapes, order, and exact bits") {
    TempDir dir;
    Rng rng(61);
    Checkpoint out;
    out.put("w", Tensor::randn({3, 4}, rng));
    out.put("b", Tensor::from_vector({1e308, -1e308, 1e-300, 0.0, -0.0}));
    out.put("s", Tensor::scalar(0.1 + 0.2));
    Tensor cube({2, 2, 2});
    for (int64_t i = 0; i < 8; ++i) cube[i] = static_cast<double>(i) / 7.0;
    out.put("cube", cube);

    const std::string path = dir.file("model.ckpt");
    out.save(path);
    Checkpoint in = Checkpoint::load(path);

    REQUIRE(in.size() == 4);
    CHECK(in.entries()[0].first == "w");
    CHECK(in.entries()[1].first == "b");
    CHECK(in.entries()[2].first == "s");
    CHECK(in.entries()[3].first == "cube");
    CHECK(in.get("w") == out.get("w"));
    CHECK(in.get("b") == out.get("b"));
    CHECK(in.get("s") == out.get("s"));
    CHECK(in.get("cube").rank() == 3);
    CHECK(in.get("cube") == cube);
}

TEST_CASE("saving identical contents yields byte-identical files") {
    TempDir dir;
    Rng rng(62);
    Checkpoint ckpt;
    ckpt.put("a", Tensor::randn({5, 5}, rng));
    ckpt.put("z", Tensor::randn({7}, rng));
    ckpt.save(dir.file("one.ckpt"));
    ckpt.save(dir.file("two.ckpt"));
    CHECK(slurp(dir.file("one.ckpt")) == slurp(dir.file("two.ckpt")));

    Checkpoint reloaded = Checkpoint::load(dir.file("one.ckpt"));
    reloaded.save(dir.file("three.ckpt"));
    CHECK(slurp(dir.file("one.ckpt")) == slurp(dir.file("three.ckpt")));
}

TEST_CASE("put replaces by name without reordering") {
    Checkpoint ckpt;
    ckpt.put("first", Tensor::scalar(1.0));
    ckpt.put("second", Tensor::scalar(2.0));
    ckpt.put("first", Tensor::scalar(9.0));
    REQUIRE(ckpt.size() == 2);
    CHECK(ckpt.entries()[0].first == "first");
    CHECK(ckpt.get("first").item() == 9.0);
    CHECK(ckpt.find("missing") == nullptr);
    CHECK_THROWS_AS(ckpt.get("missing"), Error);
}

TEST_CASE("rejects foreign files, bad versions, and truncation") {
    TempDir dir;
    {
        std::ofstream f(dir.file("garbage.bin"), std::ios::binary);
        f << "definitely not a checkpoint";
    }
    CHECK_THROWS_AS(Checkpoint::load(dir.file("garbage.bin")), Error);

    Checkpoint ckpt;
    ckpt.put("w", Tensor::full({4}, 2.5));
    ckpt.save(dir.file("good.ckpt"));

    {
        std::string bytes = slurp(dir.file("good.ckpt"));
        bytes[8] = 99;  // version field
        std::ofstream f(dir.file("future.ckpt"), std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    try {
        Checkpoint::load(dir.file("future.ckpt"));
        FAIL("expected version error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Io);
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    {
        std::string bytes = slurp(dir.file("good.ckpt"));
        bytes.resize(bytes.size() / 2);
        std::ofstream f(dir.file("cut.ckpt"), std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(Checkpoint::load(dir.file("cut.ckpt")), Error);

    {
        std::string bytes = slurp(dir.file("good.ckpt"));
        bytes.push_back('x');
        std::ofstream f(dir.file("extra.ckpt"), std::ios::binary);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    }
    CHECK_THROWS_AS(Checkpoint::load(dir.file("extra.ckpt")), Error);

    CHECK_THROWS_AS(Checkpoint::load(dir.file("nonexistent.ckpt")), Error);
}

TEST_CASE("parameter capture and restore") {
    TempDir dir;
    Rng rng(63);
    Parameter w("net.w", Tensor::randn({2, 3}, rng));
    Parameter b("net.b", Tensor::randn({3}, rng));
    ParameterList params{&w, &b};

    Checkpoint ckpt = Checkpoint::from_params(params);
    ckpt.save(dir.file("params.ckpt"));

    const Tensor w_orig = w.value();
    w.mutable_value().fill(0.0);
    b.mutable_value().fill(0.0);

    Checkpoint::load(dir.file("params.ckpt")).load_into(params);
    CHECK(w.value() == w_orig);

    Parameter other("net.other", Tensor({2}));
    ParameterList missing{&other};
    CHECK_THROWS_AS(ckpt.load_into(missing), Error);

    Parameter wrong_shape("net.w", Tensor({3, 2}));
    ParameterList bad{&wrong_shape};
    try {
        ckpt.load_into(bad);
        FAIL("expected shape error");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find("net.w") != std::string::npos);
    }
}
