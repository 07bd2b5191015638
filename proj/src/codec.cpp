#include <zlib.h>

#include <cmath>
#include <cstring>

#include "fleeg/transport.hpp"

namespace fleeg {

namespace {

constexpr char kMagic[4] = {'F', 'L', 'G', '1'};

struct ByteWriter {
    std::vector<std::uint8_t> out;

    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out.insert(out.end(), b, b + n);
    }
    void u8(std::uint8_t v) { out.push_back(v); }
    void u32(std::uint32_t v) { raw(&v, 4); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
};

struct ByteReader {
    const std::uint8_t* p;
    std::size_t n;
    std::size_t pos = 0;

    void raw(void* dst, std::size_t len, const char* what) {
        if (pos + len > n)
            throw CodecError(std::string("decode: truncated buffer reading ") + what);
        std::memcpy(dst, p + pos, len);
        pos += len;
    }
    std::uint8_t u8(const char* what) {
        std::uint8_t v;
        raw(&v, 1, what);
        return v;
    }
    std::uint32_t u32(const char* what) {
        std::uint32_t v;
        raw(&v, 4, what);
        return v;
    }
    double f64(const char* what) {
        double v;
        raw(&v, 8, what);
        return v;
    }
    std::string str(const char* what) {
        const std::uint32_t len = u32(what);
        if (pos + len > n)
            throw CodecError(std::string("decode: truncated buffer reading ") + what);
        std::string s(reinterpret_cast<const char*>(p + pos), len);
        pos += len;
        return s;
    }
    void expect_end(const char* what) {
        if (pos != n)
            throw CodecError(std::string("decode: ") + std::to_string(n - pos) +
                             " trailing bytes after " + what);
    }
};

void write_weights(ByteWriter& w, const WeightSet& ws) {
    w.u32(static_cast<std::uint32_t>(ws.entries.size()));
    for (const auto& e : ws.entries) {
        for (double v : e.values)
            if (!std::isfinite(v))
                throw ContractError("encode_weights: non-finite value in entry '" + e.name +
                                    "'");
        if (e.size() != static_cast<std::int64_t>(e.values.size()))
            throw ContractError("encode_weights: entry '" + e.name + "' dims disagree");
        w.str(e.name);
        for (int d : e.dims) w.u32(static_cast<std::uint32_t>(d));
        w.raw(e.values.data(), e.values.size() * sizeof(double));
    }
}

WeightSet read_weights(ByteReader& r) {
    WeightSet ws;
    const std::uint32_t count = r.u32("entry count");
    ws.entries.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        WeightSet::Entry e;
        e.name = r.str("entry name");
        for (int d = 0; d < 4; ++d) e.dims[d] = static_cast<int>(r.u32("entry dims"));
        const std::int64_t sz = e.size();
        if (sz < 0 || sz > (1 << 28))
            throw CodecError("decode_weights: implausible entry size");
        e.values.resize(static_cast<std::size_t>(sz));
        r.raw(e.values.data(), e.values.size() * sizeof(double), "entry values");
        for (double v : e.values)
            if (!std::isfinite(v))
                throw CodecError("decode_weights: non-finite value in entry '" + e.name + "'");
        ws.entries.push_back(std::move(e));
    }
    return ws;
}

void write_format(ByteWriter& w, const DatasetFormat& f) {
    w.str(f.name);
    w.u32(static_cast<std::uint32_t>(f.channels));
    w.f64(f.sample_rate);
    w.u32(static_cast<std::uint32_t>(f.trial_samples));
    w.u32(static_cast<std::uint32_t>(f.subjects));
    w.u32(static_cast<std::uint32_t>(f.trials_per_subject));
}

DatasetFormat read_format(ByteReader& r) {
    DatasetFormat f;
    f.name = r.str("format name");
    f.channels = static_cast<int>(r.u32("format channels"));
    f.sample_rate = r.f64("format rate");
    f.trial_samples = static_cast<int>(r.u32("format samples"));
    f.subjects = static_cast<int>(r.u32("format subjects"));
    f.trials_per_subject = static_cast<int>(r.u32("format trials"));
    return f;
}

std::uint32_t payload_crc(const std::vector<std::uint8_t>& payload) {
    return static_cast<std::uint32_t>(
        ::crc32(::crc32(0L, nullptr, 0), payload.data(), static_cast<uInt>(payload.size())));
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const WeightSet& ws) {
    ByteWriter w;
    write_weights(w, ws);
    return std::move(w.out);
}

WeightSet decode_weights(const std::vector<std::uint8_t>& bytes) {
    ByteReader r{bytes.data(), bytes.size()};
    WeightSet ws = read_weights(r);
    r.expect_end("weight set");
    return ws;
}

const char* msg_type_name(MsgType t) {
    switch (t) {
        case MsgType::kHello: return "HELLO";
        case MsgType::kRegister: return "REGISTER";
        case MsgType::kGlobalWeights: return "GLOBAL_WEIGHTS";
        case MsgType::kClientUpdate: return "CLIENT_UPDATE";
        case MsgType::kRoundAck: return "ROUND_ACK";
        case MsgType::kShutdown: return "SHUTDOWN";
        case MsgType::kError: return "ERROR";
    }
    return "UNKNOWN";
}

std::vector<std::uint8_t> encode_frame(const WireMessage& msg) {
    ByteWriter w;
    w.raw(kMagic, 4);
    w.u8(static_cast<std::uint8_t>(msg.type));
    w.u32(static_cast<std::uint32_t>(msg.payload.size()));
    w.raw(msg.payload.data(), msg.payload.size());
    w.u32(payload_crc(msg.payload));
    return std::move(w.out);
}

void FrameParser::feed(const std::uint8_t* data, std::size_t n) {
    buf_.insert(buf_.end(), data, data + n);
}

std::optional<WireMessage> FrameParser::next() {
    const std::size_t avail = buf_.size() - pos_;
    if (avail >= 4 && std::memcmp(buf_.data() + pos_, kMagic, 4) != 0)
        throw ProtocolError("frame: bad magic");
    if (avail < 9) return std::nullopt;

    const std::uint8_t type = buf_[pos_ + 4];
    std::uint32_t len;
    std::memcpy(&len, buf_.data() + pos_ + 5, 4);
    if (len > (1u << 30)) throw ProtocolError("frame: implausible payload length");
    if (avail < 9 + std::size_t(len) + 4) return std::nullopt;

    WireMessage msg;
    if (type < 1 || type > 7)
        throw ProtocolError("frame: unknown message type " + std::to_string(type));
    msg.type = static_cast<MsgType>(type);
    msg.payload.assign(buf_.begin() + pos_ + 9, buf_.begin() + pos_ + 9 + len);
    std::uint32_t crc;
    std::memcpy(&crc, buf_.data() + pos_ + 9 + len, 4);
    if (crc != payload_crc(msg.payload))
        throw ProtocolError(std::string("frame: checksum mismatch on ") +
                            msg_type_name(msg.type));
    pos_ += 9 + std::size_t(len) + 4;
    if (pos_ > (1u << 16) && pos_ == buf_.size()) {
        buf_.clear();
        pos_ = 0;
    }
    return msg;
}

WireMessage make_hello(const HelloPayload& p) {
    ByteWriter w;
    w.u32(p.version);
    return {MsgType::kHello, std::move(w.out)};
}

WireMessage make_register(const RegisterPayload& p) {
    ByteWriter w;
    w.u32(p.client_id);
    w.u32(p.fold);
    write_format(w, p.format);
    w.u32(p.n_train);
    return {MsgType::kRegister, std::move(w.out)};
}

WireMessage make_round_ack(const RoundAckPayload& p) {
    ByteWriter w;
    w.u32(p.fold);
    w.u32(p.fold_count);
    return {MsgType::kRoundAck, std::move(w.out)};
}

WireMessage make_global_weights(const GlobalWeightsPayload& p) {
    ByteWriter w;
    w.u32(p.round);
    write_weights(w, p.weights);
    return {MsgType::kGlobalWeights, std::move(w.out)};
}

WireMessage make_client_update(const ClientUpdatePayload& p) {
    ByteWriter w;
    w.u32(p.round);
    w.u32(p.client_id);
    w.f64(p.train_loss);
    w.f64(p.val_loss);
    w.f64(p.val_acc);
    w.u8(p.fold_outcome ? 1 : 0);
    if (p.fold_outcome) {
        w.f64(p.fold_outcome->test_acc);
        w.u32(p.fold_outcome->best_round);
        w.f64(p.fold_outcome->best_val_loss);
        write_weights(w, p.fold_outcome->best_weights);
    }
    write_weights(w, p.theta_global_k);
    return {MsgType::kClientUpdate, std::move(w.out)};
}

WireMessage make_shutdown() { return {MsgType::kShutdown, {}}; }

WireMessage make_error(const std::string& text) {
    ByteWriter w;
    w.str(text);
    return {MsgType::kError, std::move(w.out)};
}

namespace {

void require_type(const WireMessage& m, MsgType t) {
    if (m.type != t)
        throw ProtocolError(std::string("expected ") + msg_type_name(t) + ", got " +
                            msg_type_name(m.type));
}

}  // namespace

HelloPayload parse_hello(const WireMessage& m) {
    require_type(m, MsgType::kHello);
    ByteReader r{m.payload.data(), m.payload.size()};
    HelloPayload p;
    p.version = r.u32("hello version");
    r.expect_end("hello");
    return p;
}

RegisterPayload parse_register(const WireMessage& m) {
    require_type(m, MsgType::kRegister);
    ByteReader r{m.payload.data(), m.payload.size()};
    RegisterPayload p;
    p.client_id = r.u32("register id");
    p.fold = r.u32("register fold");
    p.format = read_format(r);
    p.n_train = r.u32("register n_train");
    r.expect_end("register");
    return p;
}

RoundAckPayload parse_round_ack(const WireMessage& m) {
    require_type(m, MsgType::kRoundAck);
    ByteReader r{m.payload.data(), m.payload.size()};
    RoundAckPayload p;
    p.fold = r.u32("ack fold");
    p.fold_count = r.u32("ack fold count");
    r.expect_end("round ack");
    return p;
}

GlobalWeightsPayload parse_global_weights(const WireMessage& m) {
    require_type(m, MsgType::kGlobalWeights);
    ByteReader r{m.payload.data(), m.payload.size()};
    GlobalWeightsPayload p;
    p.round = r.u32("weights round");
    p.weights = read_weights(r);
    r.expect_end("global weights");
    return p;
}

ClientUpdatePayload parse_client_update(const WireMessage& m) {
    require_type(m, MsgType::kClientUpdate);
    ByteReader r{m.payload.data(), m.payload.size()};
    ClientUpdatePayload p;
    p.round = r.u32("update round");
    p.client_id = r.u32("update id");
    p.train_loss = r.f64("update train loss");
    p.val_loss = r.f64("update val loss");
    p.val_acc = r.f64("update val acc");
    if (r.u8("update outcome flag")) {
        FoldOutcome o;
        o.test_acc = r.f64("outcome test acc");
        o.best_round = r.u32("outcome best round");
        o.best_val_loss = r.f64("outcome best val loss");
        o.best_weights = read_weights(r);
        p.fold_outcome = std::move(o);
    }
    p.theta_global_k = read_weights(r);
    r.expect_end("client update");
    return p;
}

std::string parse_error_text(const WireMessage& m) {
    require_type(m, MsgType::kError);
    ByteReader r{m.payload.data(), m.payload.size()};
    std::string text = r.str("error text");
    r.expect_end("error");
    return text;
}

}  // namespace fleeg
