#include "motiondiff/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "motiondiff/error.hpp"

namespace motiondiff {

namespace {

constexpr char kMagic[8] = {'M', 'D', 'I', 'F', 'F', 'C', 'K', 'P'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
    uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

class Reader {
public:
    Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

    uint32_t u32() { return static_cast<uint32_t>(u64_n(4)); }
    uint64_t u64() { return u64_n(8); }
    int64_t i64() { return static_cast<int64_t>(u64_n(8)); }

    double f64() {
        const uint64_t bits = u64_n(8);
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }

    std::string bytes(size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool exhausted() const { return pos_ == buf_.size(); }

private:
    void need(size_t n) {
        require(pos_ + n <= buf_.size(), ErrorKind::Io, "truncated checkpoint file: " + path_);
    }

    uint64_t u64_n(int n) {
        need(static_cast<size_t>(n));
        uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v |= static_cast<uint64_t>(static_cast<unsigned char>(buf_[pos_ + static_cast<size_t>(i)]))
                 << (8 * i);
        pos_ += static_cast<size_t>(n);
        return v;
    }

    const std::string& buf_;
    const std::string& path_;
    size_t pos_ = 0;
};

}  // namespace

void Checkpoint::put(const std::string& name, Tensor value) {
    require(!name.empty(), ErrorKind::Contract, "checkpoint entries need a name");
    auto it = index_.find(name);
    if (it != index_.end()) {
        entries_[it->second].second = std::move(value);
    } else {
        index_[name] = entries_.size();
        entries_.emplace_back(name, std::move(value));
    }
}

const Tensor* Checkpoint::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].second;
}

const Tensor& Checkpoint::get(const std::string& name) const {
    const Tensor* t = find(name);
    require(t != nullptr, ErrorKind::Io, "checkpoint has no entry named '" + name + "'");
    return *t;
}

void Checkpoint::save(const std::string& path) const {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u64(out, entries_.size());
    for (const auto& [name, tensor] : entries_) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.append(name);
        put_u32(out, static_cast<uint32_t>(tensor.rank()));
        for (int64_t e : tensor.shape()) put_u64(out, static_cast<uint64_t>(e));
        for (int64_t i = 0; i < tensor.size(); ++i) put_f64(out, tensor[i]);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorKind::Io, "cannot open '" + path + "' for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    f.flush();
    require(f.good(), ErrorKind::Io, "failed writing '" + path + "'");
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), ErrorKind::Io, "cannot open '" + path + "' for reading");
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r(buf, path);
    const std::string magic = r.bytes(sizeof(kMagic));
    require(std::memcmp(magic.data(), kMagic, sizeof(kMagic)) == 0, ErrorKind::Io,
            "'" + path + "' is not a checkpoint file");
    const uint32_t version = r.u32();
    require(version == kVersion, ErrorKind::Io,
            "unsupported checkpoint version " + std::to_string(version) + " in '" + path +
                "' (expected " + std::to_string(kVersion) + ")");
    const uint64_t count = r.u64();

    Checkpoint ckpt;
    for (uint64_t n = 0; n < count; ++n) {
        const uint32_t name_len = r.u32();
        const std::string name = r.bytes(name_len);
        const uint32_t rank = r.u32();
        require(rank <= 8, ErrorKind::Io, "corrupt checkpoint entry rank in '" + path + "'");
        std::vector<int64_t> shape(rank);
        int64_t total = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            shape[i] = r.i64();
            require(shape[i] > 0, ErrorKind::Io, "corrupt checkpoint extents in '" + path + "'");
            total *= shape[i];
        }
        Tensor t(shape);
        for (int64_t i = 0; i < total; ++i) t[i] = r.f64();
        ckpt.put(name, std::move(t));
    }
    require(r.exhausted(), ErrorKind::Io, "trailing bytes in checkpoint '" + path + "'");
    return ckpt;
}

Checkpoint Checkpoint::from_params(const ParameterList& params) {
    Checkpoint ckpt;
    for (const Parameter* p : params) ckpt.put(p->name(), p->value());
    return ckpt;
}

void Checkpoint::load_into(const ParameterList& params) const {
    for (Parameter* p : params) {
        const Tensor* t = find(p->name());
        require(t != nullptr, ErrorKind::Io, "checkpoint is missing parameter '" + p->name() + "'");
        require(t->same_shape(p->value()), ErrorKind::Io,
                "checkpoint shape mismatch for '" + p->name() + "': " + t->shape_str() + " vs " +
                    p->value().shape_str());
        p->mutable_value() = *t;
    }
}

}  // namespace motiondiff
