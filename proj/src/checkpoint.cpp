#include "umt/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <system_error>

#include "umt/config.hpp"
#include "umt/error.hpp"

namespace umt {

namespace {

constexpr std::array<char, 8> kMagic = {'U', 'M', 'T', 'C', 'K', 'P', 'T', '1'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    explicit Writer(std::ostream& out) : out_(out) {}

    template <typename T>
    void put(T value) {
        out_.write(reinterpret_cast<const char*>(&value), sizeof value);
    }
    void bytes(const std::string& s) { out_.write(s.data(), static_cast<std::streamsize>(s.size())); }

private:
    std::ostream& out_;
};

class Reader {
public:
    Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

    template <typename T>
    T get() {
        T value{};
        read(reinterpret_cast<char*>(&value), sizeof value);
        return value;
    }
    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        read(s.data(), n);
        return s;
    }
    void read(char* dst, std::size_t n) {
        if (!in_.read(dst, static_cast<std::streamsize>(n))) {
            throw DataError("checkpoint " + source_ + " is truncated");
        }
    }

private:
    std::istream& in_;
    std::string source_;
};

// Guards against corrupted length fields before allocating.
constexpr std::uint64_t kMaxField = std::uint64_t{1} << 32;

}  // namespace

void save_checkpoint(const UmtModel& model, const std::filesystem::path& path) {
    const std::filesystem::path temp = path.string() + ".tmp";
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot write checkpoint " + temp.string());
        }
        Writer w(out);
        out.write(kMagic.data(), kMagic.size());
        w.put<std::uint32_t>(kCheckpointVersion);
        const std::string config = to_keyed(model.config()).to_text();
        w.put<std::uint64_t>(config.size());
        w.bytes(config);
        w.put<std::uint64_t>(model.init_seed());
        const auto& entries = model.parameters().entries();
        w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
        for (const auto& [name, tensor] : entries) {
            w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
            w.bytes(name);
            w.put<std::uint32_t>(static_cast<std::uint32_t>(tensor.ndim()));
            for (std::size_t d : tensor.shape()) {
                w.put<std::uint64_t>(d);
            }
            for (double v : tensor.data()) {
                w.put<double>(v);
            }
        }
        out.flush();
        if (!out) {
            throw IoError("failed writing checkpoint " + temp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(temp, path, ec);
    if (ec) {
        std::filesystem::remove(temp);
        throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
    }
}

std::unique_ptr<UmtModel> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path.string());
    }
    Reader r(in, path.string());
    std::array<char, 8> magic{};
    r.read(magic.data(), magic.size());
    if (magic != kMagic) {
        throw DataError(path.string() + " is not a checkpoint (bad magic)");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    }
    const auto config_len = r.get<std::uint64_t>();
    if (config_len > kMaxField) {
        throw DataError("checkpoint config block is implausibly large");
    }
    ModelConfig config;
    apply_config(KeyedConfig::parse(r.bytes(config_len), path.string() + "[config]"), config);
    const auto init_seed = r.get<std::uint64_t>();
    auto model = std::make_unique<UmtModel>(config, init_seed);

    const auto& entries = model->parameters().entries();
    const auto count = r.get<std::uint32_t>();
    if (count != entries.size()) {
        throw DataError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                        std::to_string(entries.size()));
    }
    for (const auto& [name, tensor] : entries) {
        const auto name_len = r.get<std::uint32_t>();
        const std::string stored = r.bytes(name_len);
        if (stored != name) {
            throw DataError("checkpoint tensor '" + stored + "' found where '" + name + "' was expected");
        }
        const auto rank = r.get<std::uint32_t>();
        Shape shape(rank);
        for (auto& d : shape) {
            d = static_cast<std::size_t>(r.get<std::uint64_t>());
        }
        if (shape != tensor.shape()) {
            throw DataError("checkpoint tensor '" + name + "' has shape " + shape_string(shape) + ", model expects " +
                            shape_string(tensor.shape()));
        }
        Tensor target = tensor;
        auto values = target.mutable_data();
        r.read(reinterpret_cast<char*>(values.data()), values.size() * sizeof(double));
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError("checkpoint " + path.string() + " has trailing bytes");
    }
    return model;
}

}  // namespace umt
