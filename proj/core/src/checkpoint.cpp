#include "sdlpgc/checkpoint.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json_io.hpp"

namespace sdlpgc {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'D', 'L', 'P', 'G', 'C', 'P', 'A'};
constexpr std::uint64_t kTrailer = 0x454E44504152414DULL;
const char* kMomentFirst = "adam.m.";
const char* kMomentSecond = "adam.v.";

class Writer {
public:
    template <class T>
    void put(const T& v) {
        buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_bytes(std::string_view s) { buf_.append(s); }
    void put_tensor(const std::string& name, const Tensor& t) {
        put(static_cast<std::uint32_t>(name.size()));
        put_bytes(name);
        put(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) put(static_cast<std::uint64_t>(d));
        buf_.append(reinterpret_cast<const char*>(t.raw()), t.size() * sizeof(double));
    }
    const std::string& bytes() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    explicit Reader(std::string_view data) : data_(data) {}
    template <class T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    std::string get_string(std::size_t n) { return std::string(take(n), n); }
    std::pair<std::string, Tensor> get_tensor() {
        std::string name = get_string(get<std::uint32_t>());
        const auto rank = get<std::uint32_t>();
        if (rank > 8) throw CheckpointError("corrupt checkpoint: tensor rank " + std::to_string(rank));
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(get<std::uint64_t>());
        Tensor t(shape);
        const std::size_t bytes = t.size() * sizeof(double);
        std::memcpy(t.raw(), take(bytes), bytes);
        return {std::move(name), std::move(t)};
    }

private:
    const char* take(std::size_t n) {
        if (n > data_.size() - pos_) throw CheckpointError("corrupt checkpoint: truncated parameter archive");
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot read checkpoint file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

std::string git_blob_sha1(std::string_view bytes) {
    const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                    EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                    EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 &&
                    EVP_DigestFinal_ex(ctx, digest.data(), &len) == 1;
    EVP_MD_CTX_free(ctx);
    if (!ok) throw std::runtime_error("sha1 digest failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

void save_checkpoint(const SDLPGCModel& model, const data::NormStats& norm, const TrainingState& state,
                     const fs::path& dir, const std::string& dataset) {
    fs::create_directories(dir);
    Writer w;
    w.put_bytes(std::string_view(kMagic, sizeof(kMagic)));
    w.put(kCheckpointVersion);
    const auto& params = model.params();
    w.put(static_cast<std::uint64_t>(params.count() + 2 * state.optimizer.size()));
    for (const auto& [name, var] : params) w.put_tensor(name, var.value());
    for (const auto& [name, m] : state.optimizer) {
        w.put_tensor(kMomentFirst + name, m.first);
        w.put_tensor(kMomentSecond + name, m.second);
    }
    w.put(kTrailer);

    const std::string hash = git_blob_sha1(w.bytes());
    {
        std::ofstream out(dir / "params.bin", std::ios::binary | std::ios::trunc);
        out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
        if (!out) throw CheckpointError("failed writing " + (dir / "params.bin").string());
    }
    json manifest{{"format_version", kCheckpointVersion},
                  {"dataset", dataset},
                  {"config", detail::to_json(model.config())},
                  {"norm_stats", detail::to_json(norm)},
                  {"seed", model.config().seed},
                  {"padding_len", model.config().padding_len()},
                  {"parameter_count", model.parameter_count()},
                  {"training_state",
                   {{"epoch", state.epoch},
                    {"steps", state.steps},
                    {"best_val_mae", std::isfinite(state.best_val_mae) ? json(state.best_val_mae) : json(nullptr)}}},
                  {"content_hash", hash}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    const fs::path params_path = dir / "params.bin";
    if (!fs::exists(manifest_path)) throw CheckpointError("missing checkpoint manifest: " + manifest_path.string());
    json manifest;
    try {
        manifest = json::parse(read_file(manifest_path));
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint manifest: " + std::string(e.what()));
    }
    const auto version = manifest.value("format_version", 0u);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");

    const std::string bytes = read_file(params_path);
    Reader r(bytes);
    if (r.get_string(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic)))
        throw CheckpointError("corrupt checkpoint: bad magic in " + params_path.string());
    const auto archive_version = r.get<std::uint32_t>();
    if (archive_version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(archive_version) + " in archive");
    const auto count = r.get<std::uint64_t>();
    std::vector<std::pair<std::string, Tensor>> entries;
    for (std::uint64_t i = 0; i < count; ++i) entries.push_back(r.get_tensor());
    if (r.get<std::uint64_t>() != kTrailer) throw CheckpointError("corrupt checkpoint: missing trailer");
    const std::string hash = git_blob_sha1(bytes);
    if (manifest.value("content_hash", std::string{}) != hash)
        throw CheckpointError("corrupt checkpoint: content hash mismatch for " + params_path.string());

    LoadedCheckpoint out;
    try {
        out.model = std::make_unique<SDLPGCModel>(detail::model_config_from_json(manifest.at("config")));
        out.norm = detail::norm_stats_from_json(manifest.at("norm_stats"));
        const auto& ts = manifest.at("training_state");
        out.state.epoch = ts.at("epoch").get<std::size_t>();
        out.state.steps = ts.at("steps").get<std::size_t>();
        if (!ts.at("best_val_mae").is_null()) out.state.best_val_mae = ts.at("best_val_mae").get<double>();
        out.dataset = manifest.value("dataset", std::string{});
    } catch (const json::exception& e) {
        throw CheckpointError("corrupt checkpoint manifest: " + std::string(e.what()));
    } catch (const ConfigError& e) {
        throw CheckpointError("checkpoint config rejected: " + std::string(e.what()));
    }
    out.content_hash = hash;

    auto& params = out.model->params();
    std::size_t loaded = 0;
    for (auto& [name, tensor] : entries) {
        if (name.rfind(kMomentFirst, 0) == 0 || name.rfind(kMomentSecond, 0) == 0) {
            const bool first = name.rfind(kMomentFirst, 0) == 0;
            auto& slot = out.state.optimizer[name.substr(std::strlen(first ? kMomentFirst : kMomentSecond))];
            (first ? slot.first : slot.second) = std::move(tensor);
            continue;
        }
        if (!params.contains(name)) throw CheckpointError("checkpoint parameter '" + name + "' not in model");
        auto& var = params.get(name);
        if (var.shape() != tensor.shape())
            throw CheckpointError("checkpoint parameter '" + name + "' has shape " + shape_str(tensor.shape()) +
                                  ", model expects " + shape_str(var.shape()));
        var.mutable_value() = std::move(tensor);
        ++loaded;
    }
    if (loaded != params.count())
        throw CheckpointError("checkpoint holds " + std::to_string(loaded) + " of " + std::to_string(params.count()) +
                              " model parameters");
    return out;
}

}  // namespace sdlpgc
