#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fleeg/model.hpp"
#include "fleeg/transport.hpp"

using namespace fleeg;

TEST_CASE("weight codec: empty set is a four-byte zero count") {
    WeightSet empty;
    const auto bytes = encode_weights(empty);
    CHECK(bytes == std::vector<std::uint8_t>{0, 0, 0, 0});
    CHECK(decode_weights(bytes).entries.empty());
}

TEST_CASE("weight codec: single entry round-trips bit-exactly") {
    WeightSet ws;
    ws.entries.push_back({"b", {1, 1, 1, 2}, {0.0, 1.5}});
    const WeightSet back = decode_weights(encode_weights(ws));
    CHECK(back.bit_equal(ws));
    CHECK(back.entries[0].name == "b");
}

TEST_CASE("weight codec: a full global module round-trips and re-encodes canonically") {
    const WeightSet ws = make_global_weightset(42, 0);
    const auto bytes = encode_weights(ws);
    const WeightSet back = decode_weights(bytes);
    CHECK(back.bit_equal(ws));
    CHECK(encode_weights(back) == bytes);
}

TEST_CASE("weight codec: distinct error kinds") {
    WeightSet ws;
    ws.entries.push_back({"w", {1, 1, 1, 2}, {1.0, std::nan("")}});
    CHECK_THROWS_AS(encode_weights(ws), ContractError);

    ws.entries[0].values = {1.0, 2.0};
    auto bytes = encode_weights(ws);
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_WITH_AS(decode_weights(bytes), doctest::Contains("truncated"), CodecError);

    auto nan_bytes = encode_weights(ws);
    // overwrite a value with a NaN pattern
    const double bad = std::nan("");
    std::memcpy(nan_bytes.data() + nan_bytes.size() - 8, &bad, 8);
    CHECK_THROWS_AS(decode_weights(nan_bytes), CodecError);
}

TEST_CASE("frames: round trip, checksum, magic and type validation") {
    const WireMessage msg = make_error("boom");
    auto bytes = encode_frame(msg);

    FrameParser p;
    p.feed(bytes.data(), bytes.size());
    auto got = p.next();
    REQUIRE(got.has_value());
    CHECK(got->type == MsgType::kError);
    CHECK(parse_error_text(*got) == "boom");
    CHECK(!p.next().has_value());

    {
        auto corrupted = bytes;
        corrupted[10] ^= 0xff;  // payload byte
        FrameParser q;
        q.feed(corrupted.data(), corrupted.size());
        CHECK_THROWS_WITH_AS(q.next(), doctest::Contains("checksum"), ProtocolError);
    }
    {
        auto bad_magic = bytes;
        bad_magic[0] = 'X';
        FrameParser q;
        q.feed(bad_magic.data(), bad_magic.size());
        CHECK_THROWS_WITH_AS(q.next(), doctest::Contains("magic"), ProtocolError);
    }
    {
        auto bad_type = bytes;
        bad_type[4] = 99;
        FrameParser q;
        q.feed(bad_type.data(), bad_type.size());
        CHECK_THROWS_WITH_AS(q.next(), doctest::Contains("unknown message type"), ProtocolError);
    }
}

TEST_CASE("framing is self-delimiting: byte-by-byte prefixes never misparse") {
    std::vector<std::uint8_t> stream;
    const WireMessage msgs[] = {make_hello({1}), make_shutdown(), make_error("x")};
    for (const auto& m : msgs) {
        const auto b = encode_frame(m);
        stream.insert(stream.end(), b.begin(), b.end());
    }
    FrameParser p;
    std::size_t parsed = 0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
        p.feed(&stream[i], 1);
        while (auto m = p.next()) {
            CHECK(m->type == msgs[parsed].type);
            CHECK(m->payload == msgs[parsed].payload);
            ++parsed;
        }
    }
    CHECK(parsed == 3);
}

TEST_CASE("typed payloads survive the wire") {
    RegisterPayload reg;
    reg.client_id = 2;
    reg.fold = 5;
    reg.format = {"small", 8, 100.0, 122, 4, 40};
    reg.n_train = 108;
    const RegisterPayload reg2 = parse_register(make_register(reg));
    CHECK(reg2.client_id == 2);
    CHECK(reg2.fold == 5);
    CHECK(reg2.format.name == "small");
    CHECK(reg2.format.sample_rate == 100.0);
    CHECK(reg2.n_train == 108);

    GlobalWeightsPayload gw{7, make_global_weightset(3, 1)};
    const GlobalWeightsPayload gw2 = parse_global_weights(make_global_weights(gw));
    CHECK(gw2.round == 7);
    CHECK(gw2.weights.bit_equal(gw.weights));

    ClientUpdatePayload up;
    up.round = 7;
    up.client_id = 1;
    up.train_loss = 0.25;
    up.val_loss = 0.5;
    up.val_acc = 0.75;
    up.theta_global_k = make_global_weightset(4, 0);
    FoldOutcome o;
    o.test_acc = 0.625;
    o.best_round = 3;
    o.best_val_loss = 0.4;
    o.best_weights = make_global_weightset(5, 0);
    up.fold_outcome = o;
    const ClientUpdatePayload up2 = parse_client_update(make_client_update(up));
    CHECK(up2.val_acc == 0.75);
    REQUIRE(up2.fold_outcome.has_value());
    CHECK(up2.fold_outcome->test_acc == 0.625);
    CHECK(up2.fold_outcome->best_weights.bit_equal(o.best_weights));
    CHECK(up2.theta_global_k.bit_equal(up.theta_global_k));

    // wrong-type parse is rejected
    CHECK_THROWS_AS(parse_register(make_hello({1})), ProtocolError);
}
