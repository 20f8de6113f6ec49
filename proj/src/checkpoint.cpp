#include "tryon/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace tryon {

namespace {

// Little-endian writer/reader. The reader tracks its offset so truncation
// errors can name where the file ended.
struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary) {
        if (!out) fail("cannot open checkpoint for writing: ", path);
    }
    void bytes(const void* p, std::size_t n) { out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        bytes(b, 8);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void f32_array(const std::vector<float>& v) {
        for (float x : v) {
            std::uint32_t bits;
            std::memcpy(&bits, &x, 4);
            u32(bits);
        }
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void array(const NamedArray& a) {
        str(a.name);
        u32(static_cast<std::uint32_t>(a.shape.size()));
        for (int d : a.shape) u32(static_cast<std::uint32_t>(d));
        f32_array(a.data);
    }
};

struct Reader {
    std::ifstream in;
    std::string path;
    std::size_t offset = 0;
    Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) fail("cannot open checkpoint: ", p);
    }
    void bytes(void* p, std::size_t n) {
        in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in.gcount()) != n)
            fail("truncated checkpoint ", path, ": unexpected end of file at offset ",
                 offset + static_cast<std::size_t>(in.gcount()));
        offset += n;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        bytes(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        bytes(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        if (n > (1u << 20)) fail("corrupt checkpoint ", path, ": name length ", n);
        std::string s(n, '\0');
        if (n) bytes(s.data(), n);
        return s;
    }
    NamedArray array() {
        NamedArray a;
        a.name = str();
        const std::uint32_t nd = u32();
        if (nd > 8) fail("corrupt checkpoint ", path, ": tensor rank ", nd);
        std::size_t numel = 1;
        for (std::uint32_t i = 0; i < nd; ++i) {
            const std::uint32_t d = u32();
            if (d == 0 || d > (1u << 28)) fail("corrupt checkpoint ", path, ": dimension ", d);
            a.shape.push_back(static_cast<int>(d));
            numel *= d;
        }
        a.data.resize(numel);
        for (std::size_t i = 0; i < numel; ++i) {
            const std::uint32_t bits = u32();
            float f;
            std::memcpy(&f, &bits, 4);
            a.data[i] = f;
        }
        return a;
    }
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
    Writer w(path);
    w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
    w.u32(kCheckpointVersion);
    w.u64(ck.global_step);
    w.u64(ck.rng_seed);
    w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
    for (const auto& t : ck.tensors) w.array(t);
    unsigned char has_opt = ck.optimizer ? 1 : 0;
    w.bytes(&has_opt, 1);
    if (ck.optimizer) {
        const auto& o = *ck.optimizer;
        w.u64(o.step_count);
        w.f64(o.beta1);
        w.f64(o.beta2);
        w.f64(o.epsilon);
        w.f64(o.learning_rate);
        w.u32(static_cast<std::uint32_t>(o.first_moment.size()));
        for (std::size_t i = 0; i < o.first_moment.size(); ++i) {
            w.array(o.first_moment[i]);
            w.array(o.second_moment[i]);
        }
    }
    if (!w.out) fail("write failed for checkpoint: ", path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.bytes(magic, 8);
    if (std::memcmp(magic, kCheckpointMagic, 8) != 0)
        fail("bad checkpoint magic in ", path, " (not a checkpoint file)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        fail("checkpoint version mismatch in ", path, ": found ", version, ", expected ",
             kCheckpointVersion);
    Checkpoint ck;
    ck.global_step = r.u64();
    ck.rng_seed = r.u64();
    const std::uint32_t nt = r.u32();
    ck.tensors.reserve(nt);
    for (std::uint32_t i = 0; i < nt; ++i) ck.tensors.push_back(r.array());
    unsigned char has_opt = 0;
    r.bytes(&has_opt, 1);
    if (has_opt) {
        OptimizerRecord o;
        o.step_count = r.u64();
        o.beta1 = r.f64();
        o.beta2 = r.f64();
        o.epsilon = r.f64();
        o.learning_rate = r.f64();
        const std::uint32_t n = r.u32();
        for (std::uint32_t i = 0; i < n; ++i) {
            o.first_moment.push_back(r.array());
            o.second_moment.push_back(r.array());
        }
        ck.optimizer = std::move(o);
    }
    return ck;
}

Checkpoint snapshot_model(const std::vector<NamedParam<float>>& params,
                          const std::vector<NamedBuffer<float>>& buffers,
                          std::uint64_t global_step, std::uint64_t rng_seed,
                          const AdamState<float>* opt,
                          const std::vector<std::string>* opt_param_names) {
    Checkpoint ck;
    ck.global_step = global_step;
    ck.rng_seed = rng_seed;
    for (const auto& p : params)
        ck.tensors.push_back({p.name, p.tensor.shape(), p.tensor.data()});
    for (const auto& b : buffers)
        ck.tensors.push_back({b.name, {static_cast<int>(b.data->size())}, *b.data});
    if (opt && opt_param_names) {
        OptimizerRecord o;
        o.step_count = static_cast<std::uint64_t>(opt->step_count);
        o.beta1 = opt->beta1;
        o.beta2 = opt->beta2;
        o.epsilon = opt->epsilon;
        o.learning_rate = opt->learning_rate;
        for (std::size_t i = 0; i < opt->first_moment.size(); ++i) {
            const std::string& name = (*opt_param_names)[i];
            const std::vector<int> shape = {static_cast<int>(opt->first_moment[i].size())};
            o.first_moment.push_back({name, shape, opt->first_moment[i]});
            o.second_moment.push_back({name, shape, opt->second_moment[i]});
        }
        ck.optimizer = std::move(o);
    }
    return ck;
}

void restore_model(const Checkpoint& ck, std::vector<NamedParam<float>>& params,
                   std::vector<NamedBuffer<float>>& buffers) {
    for (const auto& t : ck.tensors) {
        bool matched = false;
        for (auto& p : params) {
            if (p.name != t.name) continue;
            if (p.tensor.shape() != t.shape)
                fail("checkpoint tensor ", t.name, " has unexpected shape");
            p.tensor.data() = t.data;
            matched = true;
            break;
        }
        if (!matched) {
            for (auto& b : buffers) {
                if (b.name != t.name) continue;
                if (b.data->size() != t.data.size())
                    fail("checkpoint buffer ", t.name, " has unexpected size");
                *b.data = t.data;
                matched = true;
                break;
            }
        }
        if (!matched) fail("checkpoint holds unknown parameter name: ", t.name);
    }
}

}  // namespace tryon
