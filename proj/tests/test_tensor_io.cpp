#include <doctest.h>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "downscaler/io/formats.hpp"
#include "downscaler/rng.hpp"
#include "downscaler/tensor.hpp"

using namespace downscaler;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

} // namespace

TEST_CASE("tensor shape and data length stay congruent") {
    Tensor t({2, 3, 4});
    CHECK(t.size() == 24);
    CHECK(t.rank() == 3);
    CHECK_THROWS_AS(Tensor({2, 0, 4}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, 2}, {1.0f, 2.0f, 3.0f}), ShapeError);

    t.at3(1, 2, 3) = 7.0f;
    CHECK(t.data[23] == 7.0f);
}

TEST_CASE("checkpoint round trip is bit exact") {
    RandomStream rs(99);
    std::vector<io::NamedTensor> tensors;
    tensors.push_back({"a/weight", Tensor({3, 5}, [&] {
                           std::vector<float> v(15);
                           for (auto& x : v) x = rs.normal_f() * 100.0f;
                           return v;
                       }())});
    tensors.push_back({"b", Tensor({2, 2, 2, 2}, std::vector<float>(16, -0.0f))});
    tensors.push_back({"c", Tensor({1}, {1.17549435e-38f})});

    const std::string path = temp_path("dsc_test_ckpt.bin");
    io::write_checkpoint(path, tensors);
    const auto loaded = io::read_checkpoint(path);

    REQUIRE(loaded.size() == tensors.size());
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        CHECK(loaded[i].name == tensors[i].name);
        REQUIRE(loaded[i].value.shape == tensors[i].value.shape);
        for (std::size_t j = 0; j < tensors[i].value.size(); ++j)
            CHECK(std::bit_cast<std::uint32_t>(loaded[i].value.data[j]) ==
                  std::bit_cast<std::uint32_t>(tensors[i].value.data[j]));
    }

    // write -> read -> write must reproduce the file byte for byte
    const std::string path2 = temp_path("dsc_test_ckpt2.bin");
    io::write_checkpoint(path2, loaded);
    CHECK(file_bytes(path) == file_bytes(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("dset round trip preserves split index and metadata") {
    RandomStream rs(7);
    io::DsetFile f;
    f.tensors.push_back({"X", Tensor({4, 2, 2, 2}, [&] {
                             std::vector<float> v(32);
                             for (auto& x : v) x = rs.normal_f();
                             return v;
                         }())});
    f.tensors.push_back({"Y", Tensor({4, 8, 8}, std::vector<float>(256, 0.25f))});
    f.split_index = 3;
    f.metadata_json = "{\"kind\":\"dataset\",\"seed\":7}";

    const std::string path = temp_path("dsc_test_dset.bin");
    io::write_dset(path, f);
    const io::DsetFile g = io::read_dset(path);
    CHECK(g.split_index == 3);
    CHECK(g.metadata_json == f.metadata_json);
    REQUIRE(g.tensors.size() == 2);
    CHECK(g.tensors[0].name == "X");
    CHECK(g.tensors[1].value.data == f.tensors[1].value.data);

    const std::string path2 = temp_path("dsc_test_dset2.bin");
    io::write_dset(path2, g);
    CHECK(file_bytes(path) == file_bytes(path2));
    std::remove(path.c_str());
    std::remove(path2.c_str());
}

TEST_CASE("corrupt containers fail with the offending field named") {
    const std::string path = temp_path("dsc_test_bad.bin");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE";
    }
    CHECK_THROWS_WITH_AS(io::read_checkpoint(path), doctest::Contains("magic"), DataError);

    {
        std::ofstream out(path, std::ios::binary);
        out << "CKPT";
        const char version[2] = {1, 0};
        out.write(version, 2);
        const char count[4] = {1, 0, 0, 0};
        out.write(count, 4); // announces one tensor, then truncates
    }
    CHECK_THROWS_WITH_AS(io::read_checkpoint(path), doctest::Contains("name length"), DataError);
    std::remove(path.c_str());
}

TEST_CASE("pgm maps carry the rescale bounds in the comment") {
    Tensor field({2, 3}, {0.0f, 1.0f, 2.0f, 3.0f, 10.0f, 20.0f});
    const std::string path = temp_path("dsc_test.pgm");
    io::write_pgm(path, field);
    const std::string bytes = file_bytes(path);
    CHECK(bytes.substr(0, 3) == "P5\n");
    CHECK(bytes.find("# log1p rescale: min=0 max=") != std::string::npos);
    CHECK(bytes.find("\n3 2\n255\n") != std::string::npos);
    // 6 payload bytes after the final header newline
    const std::size_t header_end = bytes.rfind("255\n") + 4;
    CHECK(bytes.size() - header_end == 6);
    CHECK(static_cast<unsigned char>(bytes[header_end]) == 0);      // min maps to 0
    CHECK(static_cast<unsigned char>(bytes[bytes.size() - 1]) == 255); // max maps to 255
    std::remove(path.c_str());
}
