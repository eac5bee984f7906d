#include "oed/container.hpp"

#include <bit>
#include <cctype>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace oed {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'O', 'E', 'D', 'B', 'I', 'N', '0', '1'};

std::size_t element_size(DType t) {
    switch (t) {
        case DType::F64: return 8;
        case DType::U32: return 4;
        case DType::U64: return 8;
        case DType::Triplet: return 24;
    }
    throw ContainerError("unknown dtype tag");
}

std::vector<unsigned char> read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ContainerError("cannot read " + p.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw ContainerError("cannot write " + p.string());
}

void write_file(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError("cannot write " + p.string());
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& name) {
    if (name.empty()) return false;
    for (char c : name)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
    return true;
}

template <class T>
Array make_array(DType t, std::vector<std::uint64_t> dims, const T* data, std::size_t count) {
    Array a;
    a.dtype = t;
    a.dims = std::move(dims);
    a.payload.resize(count * sizeof(T));
    if (count > 0) std::memcpy(a.payload.data(), data, a.payload.size());
    return a;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size, std::uint64_t state) {
    for (std::size_t i = 0; i < size; ++i) {
        state ^= data[i];
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::uint64_t Array::elements() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
}

std::vector<unsigned char> Array::encode() const {
    std::vector<unsigned char> out(kMagic, kMagic + 8);
    out.push_back(static_cast<unsigned char>(dtype));
    out.push_back(static_cast<unsigned char>(dims.size()));
    for (auto d : dims) {
        unsigned char b[8];
        std::memcpy(b, &d, 8);
        out.insert(out.end(), b, b + 8);
    }
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Array Array::decode(const std::vector<unsigned char>& bytes, const std::string& what) {
    if (bytes.size() < 10 || std::memcmp(bytes.data(), kMagic, 8) != 0)
        throw ContainerError(what + ": bad magic");
    Array a;
    a.dtype = static_cast<DType>(bytes[8]);
    const std::size_t rank = bytes[9];
    const std::size_t esize = element_size(a.dtype);
    if (bytes.size() < 10 + 8 * rank) throw ContainerError(what + ": truncated header");
    a.dims.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) std::memcpy(&a.dims[i], bytes.data() + 10 + 8 * i, 8);
    const std::size_t start = 10 + 8 * rank;
    if (bytes.size() - start != esize * a.elements())
        throw ContainerError(what + ": payload length does not match dims");
    a.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start), bytes.end());
    return a;
}

void Container::set(const std::string& key, const std::string& value) {
    require(valid_name(key) && key.rfind("array.", 0) != 0 && key != "checksum",
            "container: invalid metadata key '" + key + "'");
    require(value.find('\n') == std::string::npos, "container: metadata values must be single-line");
    meta_[key] = value;
}
void Container::set(const std::string& key, double value) { set(key, format_double(value)); }
void Container::set(const std::string& key, std::int64_t value) { set(key, std::to_string(value)); }
void Container::set(const std::string& key, std::uint64_t value) { set(key, std::to_string(value)); }

const std::string& Container::get(const std::string& key) const {
    const auto it = meta_.find(key);
    if (it == meta_.end()) throw ContainerError("container: missing key '" + key + "'");
    return it->second;
}

double Container::get_double(const std::string& key) const { return std::stod(get(key)); }
std::int64_t Container::get_int(const std::string& key) const { return std::stoll(get(key)); }

void Container::put(const std::string& name, const Matrix& m) {
    require(valid_name(name), "container: invalid array name '" + name + "'");
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    arrays_[name] = make_array(DType::F64, {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                               rm.data(), static_cast<std::size_t>(rm.size()));
}

void Container::put(const std::string& name, const Vector& v) {
    require(valid_name(name), "container: invalid array name '" + name + "'");
    arrays_[name] = make_array(DType::F64, {static_cast<std::uint64_t>(v.size())}, v.data(),
                               static_cast<std::size_t>(v.size()));
}

void Container::put_u32(const std::string& name, const std::vector<std::uint32_t>& v) {
    require(valid_name(name), "container: invalid array name '" + name + "'");
    arrays_[name] = make_array(DType::U32, {v.size()}, v.data(), v.size());
}

void Container::put_u64(const std::string& name, const std::vector<std::uint64_t>& v) {
    require(valid_name(name), "container: invalid array name '" + name + "'");
    arrays_[name] = make_array(DType::U64, {v.size()}, v.data(), v.size());
}

void Container::put_sparse(const std::string& name, const SparseMatrix& s) {
    require(valid_name(name), "container: invalid array name '" + name + "'");
    struct Entry {
        std::uint64_t row, col;
        double value;
    };
    static_assert(sizeof(Entry) == 24);
    std::vector<Entry> entries;
    for (Index k = 0; k < s.outerSize(); ++k)
        for (SparseMatrix::InnerIterator it(s, k); it; ++it)
            entries.push_back({static_cast<std::uint64_t>(it.row()), static_cast<std::uint64_t>(it.col()), it.value()});
    arrays_[name] = make_array(DType::Triplet, {entries.size()}, entries.data(), entries.size());
    set(name + ".rows", static_cast<std::int64_t>(s.rows()));
    set(name + ".cols", static_cast<std::int64_t>(s.cols()));
}

const Array& Container::array(const std::string& name) const {
    const auto it = arrays_.find(name);
    if (it == arrays_.end()) throw ContainerError("container: missing array '" + name + "'");
    return it->second;
}

Matrix Container::matrix(const std::string& name) const {
    const Array& a = array(name);
    if (a.dtype != DType::F64 || a.dims.size() != 2) throw ContainerError("container: '" + name + "' is not a matrix");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(static_cast<Index>(a.dims[0]),
                                                                              static_cast<Index>(a.dims[1]));
    if (rm.size() > 0) std::memcpy(rm.data(), a.payload.data(), a.payload.size());
    return rm;
}

Vector Container::vector(const std::string& name) const {
    const Array& a = array(name);
    if (a.dtype != DType::F64 || a.dims.size() != 1) throw ContainerError("container: '" + name + "' is not a vector");
    Vector v(static_cast<Index>(a.dims[0]));
    if (v.size() > 0) std::memcpy(v.data(), a.payload.data(), a.payload.size());
    return v;
}

std::vector<std::uint32_t> Container::u32(const std::string& name) const {
    const Array& a = array(name);
    if (a.dtype != DType::U32 || a.dims.size() != 1) throw ContainerError("container: '" + name + "' is not u32[]");
    std::vector<std::uint32_t> v(a.dims[0]);
    if (!v.empty()) std::memcpy(v.data(), a.payload.data(), a.payload.size());
    return v;
}

std::vector<std::uint64_t> Container::u64(const std::string& name) const {
    const Array& a = array(name);
    if (a.dtype != DType::U64 || a.dims.size() != 1) throw ContainerError("container: '" + name + "' is not u64[]");
    std::vector<std::uint64_t> v(a.dims[0]);
    if (!v.empty()) std::memcpy(v.data(), a.payload.data(), a.payload.size());
    return v;
}

SparseMatrix Container::sparse(const std::string& name) const {
    const Array& a = array(name);
    if (a.dtype != DType::Triplet) throw ContainerError("container: '" + name + "' is not a triplet array");
    std::vector<Triplet> t;
    for (std::uint64_t i = 0; i < a.elements(); ++i) {
        std::uint64_t r, c;
        double v;
        std::memcpy(&r, a.payload.data() + 24 * i, 8);
        std::memcpy(&c, a.payload.data() + 24 * i + 8, 8);
        std::memcpy(&v, a.payload.data() + 24 * i + 16, 8);
        t.emplace_back(static_cast<Index>(r), static_cast<Index>(c), v);
    }
    SparseMatrix s(get_int(name + ".rows"), get_int(name + ".cols"));
    s.setFromTriplets(t.begin(), t.end());
    return s;
}

std::string Container::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& [name, a] : arrays_) {
        const auto bytes = a.encode();
        h = fnv1a64(bytes.data(), bytes.size(), h);
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

std::string Container::manifest_text() const {
    std::map<std::string, std::string> lines = meta_;
    for (const auto& [name, a] : arrays_) lines["array." + name] = name + ".bin";
    lines["checksum"] = checksum();
    std::string out;
    for (const auto& [k, v] : lines) out += k + " = " + v + "\n";
    return out;
}

bool Container::exists(const fs::path& dir) { return fs::exists(dir / "manifest.txt"); }

Container Container::load(const fs::path& dir) {
    std::ifstream in(dir / "manifest.txt");
    if (!in) throw ContainerError("no container at " + dir.string());
    Container c;
    std::string line, expected;
    std::map<std::string, std::string> files;
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ContainerError(dir.string() + ": malformed manifest line '" + t + "'");
        const std::string k = trim(t.substr(0, eq)), v = trim(t.substr(eq + 1));
        if (k == "checksum")
            expected = v;
        else if (k.rfind("array.", 0) == 0)
            files[k.substr(6)] = v;
        else
            c.meta_[k] = v;
    }
    for (const auto& [name, file] : files)
        c.arrays_[name] = Array::decode(read_file(dir / file), (dir / file).string());
    if (c.checksum() != expected)
        throw ContainerError(dir.string() + ": checksum mismatch (manifest " + expected + ", data " + c.checksum() + ")");
    return c;
}

bool Container::save(const fs::path& dir) const {
    if (exists(dir)) {
        const Container old = load(dir);
        if (old.checksum() == checksum() && old.meta_ == meta_) return false;
        throw ContainerError(dir.string() + " already holds different results; remove it to regenerate");
    }
    fs::create_directories(dir);
    for (const auto& [name, a] : arrays_) write_file(dir / (name + ".bin"), a.encode());
    // The manifest goes last so a partial write never looks complete.
    write_file(dir / "manifest.txt", manifest_text());
    return true;
}

}  // namespace oed
