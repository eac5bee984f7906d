#include "oed/container.hpp"

#include <doctest.h>

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

using namespace oed;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("oed_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Container sample_container() {
    Container c;
    c.set("kind", "dis");
    c.set("sigma", 0.05);
    c.set("count", 7);
    c.set("seed", std::uint64_t{18446744073709551615ULL});
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6.5;
    c.put("m", m);
    c.put("v", Vector(Vector::LinSpaced(4, -1.0, 1.0)));
    c.put_u32("idx", {3, 1, 4});
    c.put_u64("keys", {0, 1ULL << 40});
    SparseMatrix s(3, 3);
    s.insert(0, 0) = 2.0;
    s.insert(2, 1) = -1.5;
    c.put_sparse("s", s);
    return c;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("round trip") {
    TempDir dir("roundtrip");
    const Container c = sample_container();
    CHECK(c.save(dir.path));
    const Container r = Container::load(dir.path);
    CHECK(r.get("kind") == "dis");
    CHECK(r.get_double("sigma") == 0.05);
    CHECK(r.get_int("count") == 7);
    CHECK(r.get("seed") == "18446744073709551615");
    CHECK(r.matrix("m") == c.matrix("m"));
    CHECK(r.matrix("m")(1, 2) == 6.5);
    CHECK(r.vector("v") == Vector::LinSpaced(4, -1.0, 1.0));
    CHECK(r.u32("idx") == std::vector<std::uint32_t>{3, 1, 4});
    CHECK(r.u64("keys") == std::vector<std::uint64_t>{0, 1ULL << 40});
    const SparseMatrix s = r.sparse("s");
    CHECK(s.rows() == 3);
    CHECK(s.coeff(2, 1) == -1.5);
    CHECK(s.nonZeros() == 2);
    CHECK(r.checksum() == c.checksum());
    CHECK_THROWS_AS(r.matrix("v"), ContainerError);
    CHECK_THROWS_AS(r.get("missing"), ContainerError);
}

TEST_CASE("write once") {
    TempDir dir("writeonce");
    const Container c = sample_container();
    CHECK(c.save(dir.path));
    CHECK_FALSE(c.save(dir.path));
    Container other = sample_container();
    other.put("v", Vector(Vector::Zero(4)));
    CHECK_THROWS_AS(other.save(dir.path), ContainerError);
    Container meta_only = sample_container();
    meta_only.set("kind", "kle");
    CHECK_THROWS_AS(meta_only.save(dir.path), ContainerError);
}

TEST_CASE("tampering is detected") {
    TempDir dir("tamper");
    sample_container().save(dir.path);
    const fs::path bin = dir.path / "m.bin";
    auto bytes = read_bytes(bin);
    bytes.back() ^= 0x01;
    std::ofstream(bin, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                static_cast<std::streamsize>(bytes.size()));
    CHECK_THROWS_AS(Container::load(dir.path), ContainerError);
    CHECK_THROWS_AS(Container::load(dir.path / "nowhere"), ContainerError);
}

TEST_CASE("file formats") {
    TempDir dir("format");
    sample_container().save(dir.path);
    std::ifstream in(dir.path / "manifest.txt");
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    CHECK(std::is_sorted(lines.begin(), lines.end()));
    CHECK(std::find(lines.begin(), lines.end(), "array.m = m.bin") != lines.end());
    CHECK(std::find(lines.begin(), lines.end(), "kind = dis") != lines.end());
    CHECK(std::count_if(lines.begin(), lines.end(), [](const std::string& l) { return l.rfind("checksum = ", 0) == 0; }) == 1);

    const auto bytes = read_bytes(dir.path / "m.bin");
    REQUIRE(bytes.size() == 8 + 2 + 16 + 48);
    CHECK(std::memcmp(bytes.data(), "OEDBIN01", 8) == 0);
    CHECK(bytes[8] == static_cast<unsigned char>(DType::F64));
    CHECK(bytes[9] == 2);
    std::uint64_t rows = 0, cols = 0;
    std::memcpy(&rows, bytes.data() + 10, 8);
    std::memcpy(&cols, bytes.data() + 18, 8);
    CHECK(rows == 2);
    CHECK(cols == 3);
    // Row-major payload.
    double second = 0.0;
    std::memcpy(&second, bytes.data() + 26 + 8, 8);
    CHECK(second == 2.0);
    CHECK(read_bytes(dir.path / "s.bin")[8] == static_cast<unsigned char>(DType::Triplet));

    CHECK_THROWS_AS(Array::decode({'n', 'o', 'p', 'e'}, "x"), ContainerError);
}

TEST_CASE("checksum and number formatting") {
    const unsigned char abc[] = {'a'};
    CHECK(fnv1a64(abc, 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64(nullptr, 0) == 0xcbf29ce484222325ULL);
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, std::numeric_limits<double>::denorm_min()})
    {
        const std::string t = format_double(v);
        double back = 0.0;
        std::from_chars(t.data(), t.data() + t.size(), back);
        CHECK(back == v);
    }
    CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("invalid keys") {
    Container c;
    CHECK_THROWS_AS(c.set("checksum", "x"), DomainError);
    CHECK_THROWS_AS(c.set("array.m", "x"), DomainError);
    CHECK_THROWS_AS(c.set("k", "two\nlines"), DomainError);
}
