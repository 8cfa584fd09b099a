#include "brushtrace/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "brushtrace/errors.h"

namespace brushtrace {

namespace {

constexpr char kMagic[4] = {'B', 'T', 'C', 'K'};

class Writer {
  public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    template <typename T>
    void le(T v) {
        using U = std::make_unsigned_t<T>;
        U u = static_cast<U>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
    void f32(float f) { le(std::bit_cast<std::uint32_t>(f)); }
    void f64(double d) { le(std::bit_cast<std::uint64_t>(d)); }
    std::string take() { return std::move(out_); }

  private:
    std::string out_;
};

class Reader {
  public:
    explicit Reader(const std::string& in) : in_(in) {}
    void bytes(void* p, std::size_t n) {
        need(n);
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    template <typename T>
    T le() {
        using U = std::make_unsigned_t<T>;
        need(sizeof(T));
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            u |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }
    float f32() { return std::bit_cast<float>(le<std::uint32_t>()); }
    double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
    bool done() const { return pos_ == in_.size(); }

  private:
    void need(std::size_t n) const {
        if (pos_ + n > in_.size()) throw FormatError("checkpoint truncated");
    }
    const std::string& in_;
    std::size_t pos_ = 0;
};

}  // namespace

void round_to_f32(Tensor& t) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
}

std::string encode_checkpoint(const CheckpointFile& file) {
    Writer w;
    w.bytes(kMagic, 4);
    w.le<std::uint16_t>(kCheckpointVersion);
    w.le<std::uint16_t>(0);
    w.le<std::uint64_t>(file.header.config_digest);
    w.le<std::uint32_t>(file.header.epoch);
    w.le<std::int32_t>(file.header.fold_id);
    w.f64(file.header.val_accuracy);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(file.header.config_json.size()));
    w.bytes(file.header.config_json.data(), file.header.config_json.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(file.tensors.size()));
    for (const NamedTensor& nt : file.tensors) {
        if (nt.name.size() > 0xffff) throw UsageError("checkpoint: tensor name too long");
        w.le<std::uint16_t>(static_cast<std::uint16_t>(nt.name.size()));
        w.bytes(nt.name.data(), nt.name.size());
        w.le<std::uint8_t>(static_cast<std::uint8_t>(nt.tensor.rank()));
        for (std::size_t d : nt.tensor.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
        for (double v : nt.tensor.data()) w.f32(static_cast<float>(v));
    }
    return w.take();
}

CheckpointFile decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("checkpoint: bad magic");
    const auto version = r.le<std::uint16_t>();
    if (version != kCheckpointVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    r.le<std::uint16_t>();

    CheckpointFile file;
    file.header.config_digest = r.le<std::uint64_t>();
    file.header.epoch = r.le<std::uint32_t>();
    file.header.fold_id = r.le<std::int32_t>();
    file.header.val_accuracy = r.f64();
    file.header.config_json.resize(r.le<std::uint32_t>());
    r.bytes(file.header.config_json.data(), file.header.config_json.size());

    const auto count = r.le<std::uint32_t>();
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor nt;
        nt.name.resize(r.le<std::uint16_t>());
        r.bytes(nt.name.data(), nt.name.size());
        Shape shape(r.le<std::uint8_t>());
        for (auto& d : shape) d = r.le<std::uint32_t>();
        std::vector<double> data(shape_numel(shape));
        for (double& v : data) v = static_cast<double>(r.f32());
        nt.tensor = Tensor(std::move(shape), std::move(data));
        file.tensors.push_back(std::move(nt));
    }
    if (!r.done()) throw FormatError("checkpoint: trailing bytes");
    return file;
}

void write_checkpoint(const std::filesystem::path& path, const CheckpointFile& file) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
    const std::string bytes = encode_checkpoint(file);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace brushtrace
