#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "swm/serialize.hpp"
#include "swm/tensor_ops.hpp"
#include "test_util.hpp"

using namespace swm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("swm_test_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("tensor records round trip through the container") {
    Rng rng(21);
    for (int i = 0; i < 20; ++i) {
        Shape shape;
        const int rank = 1 + static_cast<int>(rng.below(3));
        for (int r = 0; r < rank; ++r) shape.push_back(1 + static_cast<std::int64_t>(rng.below(5)));
        Tensor t = test::random_tensor(rng, shape);
        std::stringstream ss;
        io::write_tensor(ss, t);
        Tensor back = io::read_tensor(ss);
        CHECK(back.shape() == t.shape());
        CHECK(ops::max_abs_diff(back, t) == real(0));
    }
}

TEST_CASE("container header layout is as documented") {
    Tensor t = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    std::stringstream ss;
    io::write_tensor(ss, t);
    const std::string bytes = ss.str();
    REQUIRE(bytes.size() == 4 + 4 + 4 + 2 * 8 + 6 * 8);
    CHECK(bytes.substr(0, 4) == "SWMT");
    // version then rank, little-endian u32
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[8]) == 2);
    // first extent as u64
    CHECK(static_cast<unsigned char>(bytes[12]) == 2);
    CHECK(static_cast<unsigned char>(bytes[20]) == 3);
}

TEST_CASE("bad magic is rejected") {
    std::stringstream ss;
    ss << "NOPE_____________";
    CHECK_THROWS_AS(io::read_tensor(ss), IoError);
}

TEST_CASE("named parameter sets round trip with a manifest") {
    TempDir dir;
    Rng rng(5);
    io::NamedTensors params;
    params.emplace_back("injector.layer0.K.W1", test::random_tensor(rng, {4, 4}));
    params.emplace_back("injector.layer0.K.b1", test::random_tensor(rng, {4}));
    params.emplace_back("mamba.K.out_proj.W", test::random_tensor(rng, {8, 4}));
    io::save_named_tensors(dir.path / "params.bin", dir.path / "manifest.json", params);

    auto back = io::load_named_tensors(dir.path / "params.bin", dir.path / "manifest.json");
    REQUIRE(back.size() == params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        CHECK(back[i].first == params[i].first);
        CHECK(ops::max_abs_diff(back[i].second, params[i].second) == real(0));
    }
}

TEST_CASE("content hash is order and value sensitive") {
    Rng rng(9);
    io::NamedTensors a;
    a.emplace_back("x", test::random_tensor(rng, {3}));
    a.emplace_back("y", test::random_tensor(rng, {3}));
    io::NamedTensors b = a;
    CHECK(io::content_hash(a) == io::content_hash(b));
    std::swap(b[0], b[1]);
    CHECK(io::content_hash(a) != io::content_hash(b));
    b = a;
    b[0].second[0] += real(1e-9);
    CHECK(io::content_hash(a) != io::content_hash(b));
}
