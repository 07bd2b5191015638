#include <arpa/inet.h>
#include <fcntl.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "fleeg/transport.hpp"

namespace fleeg {

namespace {

using Clock = std::chrono::steady_clock;

int remaining_ms(Clock::time_point deadline) {
    const auto left =
        std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    return left < 0 ? 0 : static_cast<int>(left);
}

sockaddr_in make_addr(const std::string& address, int port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, address.c_str(), &addr.sin_addr) != 1)
        throw ProtocolError("invalid IPv4 address '" + address + "'");
    return addr;
}

}  // namespace

Socket& Socket::operator=(Socket&& o) noexcept {
    if (this != &o) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = o.fd_;
        o.fd_ = -1;
        parser_ = std::move(o.parser_);
    }
    return *this;
}

Socket::~Socket() {
    if (fd_ >= 0) ::close(fd_);
}

void Socket::send_message(const WireMessage& msg) {
    if (fd_ < 0) throw ProtocolError("send on closed socket");
    const std::vector<std::uint8_t> bytes = encode_frame(msg);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n =
            ::send(fd_, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) throw ProtocolError(std::string("send failed: ") + std::strerror(errno));
        sent += static_cast<std::size_t>(n);
    }
}

WireMessage Socket::recv_message(int timeout_ms) {
    if (fd_ < 0) throw ProtocolError("recv on closed socket");
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    std::uint8_t chunk[65536];
    for (;;) {
        if (auto msg = parser_.next()) return std::move(*msg);
        pollfd pfd{fd_, POLLIN, 0};
        const int pr = ::poll(&pfd, 1, remaining_ms(deadline));
        if (pr == 0)
            throw ProtocolError("receive timeout after " + std::to_string(timeout_ms) + " ms");
        if (pr < 0) throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
        const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n == 0) throw ProtocolError("peer disconnected");
        if (n < 0) throw ProtocolError(std::string("recv failed: ") + std::strerror(errno));
        parser_.feed(chunk, static_cast<std::size_t>(n));
    }
}

Listener::Listener(const std::string& address, int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw ProtocolError("cannot create listen socket");
    const int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_addr(address, port);
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw ProtocolError("cannot bind " + address + ":" + std::to_string(port) + ": " +
                            std::strerror(errno));
    }
    if (::listen(fd_, 16) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw ProtocolError(std::string("listen failed: ") + std::strerror(errno));
    }
    socklen_t len = sizeof addr;
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
    if (fd_ >= 0) ::close(fd_);
}

Socket Listener::accept_client(int timeout_ms) {
    pollfd pfd{fd_, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0)
        throw ProtocolError("accept timeout after " + std::to_string(timeout_ms) + " ms");
    if (pr < 0) throw ProtocolError(std::string("poll failed: ") + std::strerror(errno));
    const int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) throw ProtocolError(std::string("accept failed: ") + std::strerror(errno));
    const int one = 1;
    ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    return Socket(cfd);
}

Socket connect_to(const std::string& address, int port, int timeout_ms) {
    const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
    sockaddr_in addr = make_addr(address, port);
    std::string last_error = "connect not attempted";
    // the server may briefly be between folds; retry until the deadline
    for (;;) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw ProtocolError("cannot create socket");
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
            const int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return Socket(fd);
        }
        last_error = std::strerror(errno);
        ::close(fd);
        if (remaining_ms(deadline) == 0)
            throw ProtocolError("cannot connect to " + address + ":" + std::to_string(port) +
                                ": " + last_error);
        ::usleep(50 * 1000);
    }
}

}  // namespace fleeg
