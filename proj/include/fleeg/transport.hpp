#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fleeg/arch.hpp"
#include "fleeg/weights.hpp"

namespace fleeg {

// Canonical WeightSet bytes: entry count (u32), then per entry name length +
// UTF-8 name, four u32 dims, and row-major IEEE-754 binary64 values. All
// little-endian; one byte sequence per WeightSet, bit-exact round trip.
std::vector<std::uint8_t> encode_weights(const WeightSet& ws);
WeightSet decode_weights(const std::vector<std::uint8_t>& bytes);

enum class MsgType : std::uint8_t {
    kHello = 1,
    kRegister = 2,
    kGlobalWeights = 3,
    kClientUpdate = 4,
    kRoundAck = 5,
    kShutdown = 6,
    kError = 7,
};

const char* msg_type_name(MsgType t);

// Frame layout: magic "FLG1", type (u8), payload length (u32 LE), payload,
// CRC-32 of the payload (u32 LE).
struct WireMessage {
    MsgType type = MsgType::kError;
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(const WireMessage& msg);

// Incremental parser: feed bytes, poll complete frames. Any prefix of a valid
// stream either yields complete messages or waits for more bytes.
class FrameParser {
public:
    void feed(const std::uint8_t* data, std::size_t n);
    // Throws ProtocolError on bad magic/type/checksum.
    std::optional<WireMessage> next();

private:
    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

// Typed payloads.
struct HelloPayload {
    std::uint32_t version = 1;
};
struct RegisterPayload {
    std::uint32_t client_id = 0;
    std::uint32_t fold = 0;
    DatasetFormat format;
    std::uint32_t n_train = 0;
};
struct RoundAckPayload {
    std::uint32_t fold = 0;
    std::uint32_t fold_count = 0;
};
struct GlobalWeightsPayload {
    std::uint32_t round = 0;
    WeightSet weights;
};
struct FoldOutcome {
    double test_acc = 0.0;
    std::uint32_t best_round = 0;
    double best_val_loss = 0.0;
    WeightSet best_weights;
};
struct ClientUpdatePayload {
    std::uint32_t round = 0;
    std::uint32_t client_id = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    WeightSet theta_global_k;
    std::optional<FoldOutcome> fold_outcome;  // present on the final round
};

WireMessage make_hello(const HelloPayload& p);
WireMessage make_register(const RegisterPayload& p);
WireMessage make_round_ack(const RoundAckPayload& p);
WireMessage make_global_weights(const GlobalWeightsPayload& p);
WireMessage make_client_update(const ClientUpdatePayload& p);
WireMessage make_shutdown();
WireMessage make_error(const std::string& text);

HelloPayload parse_hello(const WireMessage& m);
RegisterPayload parse_register(const WireMessage& m);
RoundAckPayload parse_round_ack(const WireMessage& m);
GlobalWeightsPayload parse_global_weights(const WireMessage& m);
ClientUpdatePayload parse_client_update(const WireMessage& m);
std::string parse_error_text(const WireMessage& m);

// Blocking socket with a receive deadline; thin RAII over a connected fd.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept;
    ~Socket();

    bool valid() const { return fd_ >= 0; }
    void send_message(const WireMessage& msg);
    // Throws ProtocolError on timeout, disconnect, or malformed frames.
    WireMessage recv_message(int timeout_ms);

private:
    int fd_ = -1;
    FrameParser parser_;
};

class Listener {
public:
    Listener(const std::string& address, int port);
    ~Listener();
    int port() const { return port_; }
    Socket accept_client(int timeout_ms);

private:
    int fd_ = -1;
    int port_ = 0;
};

Socket connect_to(const std::string& address, int port, int timeout_ms);

}  // namespace fleeg
