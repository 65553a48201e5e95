#pragma once

// Blocking POSIX byte-stream sockets carrying wire frames.

#include "fcmhe/wire.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>

namespace fcmhe {

class ConnectionLost : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConnectRefused : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    ~Socket() { reset(); }

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }
    void reset() {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = 0;
};

/// Parses "HOST:PORT" (or ":PORT" / "PORT", host defaults to 127.0.0.1).
inline Endpoint parse_endpoint(const std::string& text) {
    Endpoint ep;
    const auto colon = text.rfind(':');
    std::string port = text;
    if (colon != std::string::npos) {
        if (colon > 0) ep.host = text.substr(0, colon);
        port = text.substr(colon + 1);
    }
    try {
        std::size_t used = 0;
        ep.port = std::stoi(port, &used);
        if (used != port.size() || ep.port < 0 || ep.port > 65535) throw std::invalid_argument("range");
    } catch (const std::exception&) {
        throw std::invalid_argument("bad endpoint '" + text + "' (expected HOST:PORT)");
    }
    return ep;
}

namespace detail {
inline sockaddr_in resolve(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(ep.port));
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
        throw std::invalid_argument("cannot resolve host '" + ep.host + "'");
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}
}  // namespace detail

/// Framed packet connection over a connected stream socket.
class Connection {
public:
    explicit Connection(Socket s) : sock_(std::move(s)) {
        int one = 1;
        ::setsockopt(sock_.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));  // fails harmlessly on AF_UNIX
    }

    void send(const Packet& p) { send_bytes(encode_frame(p)); }

    void send_bytes(const std::vector<std::uint8_t>& bytes) {
        std::size_t off = 0;
        while (off < bytes.size()) {
            const ssize_t n = ::send(sock_.fd(), bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ConnectionLost(std::string("send failed: ") + std::strerror(errno));
            }
            off += static_cast<std::size_t>(n);
        }
    }

    /// Next packet; nullopt on orderly shutdown by the peer. Throws FrameError for an
    /// undecodable frame (already consumed) and ConnectionLost on a broken stream.
    std::optional<Packet> receive() {
        while (true) {
            if (auto p = reader_.next()) return p;
            std::uint8_t buf[4096];
            const ssize_t n = ::recv(sock_.fd(), buf, sizeof(buf), 0);
            if (n == 0) {
                if (reader_.buffered() > 0) throw ConnectionLost("peer closed mid-frame");
                return std::nullopt;
            }
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ConnectionLost(std::string("recv failed: ") + std::strerror(errno));
            }
            reader_.feed(std::span<const std::uint8_t>(buf, static_cast<std::size_t>(n)));
        }
    }

    void shutdown_write() { ::shutdown(sock_.fd(), SHUT_WR); }
    void close() { sock_.reset(); }

private:
    Socket sock_;
    FrameReader reader_;
};

inline std::pair<Connection, Connection> connection_pair() {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
        throw std::runtime_error(std::string("socketpair failed: ") + std::strerror(errno));
    }
    return {Connection(Socket(fds[0])), Connection(Socket(fds[1]))};
}

class Listener {
public:
    explicit Listener(const Endpoint& ep) : sock_(::socket(AF_INET, SOCK_STREAM, 0)) {
        if (!sock_.valid()) throw std::runtime_error(std::string("socket failed: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr = detail::resolve(ep);
        if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            throw std::runtime_error("bind " + ep.host + ":" + std::to_string(ep.port) + ": " + std::strerror(errno));
        }
        if (::listen(sock_.fd(), 4) != 0) throw std::runtime_error(std::string("listen: ") + std::strerror(errno));
        socklen_t len = sizeof(addr);
        ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
    }

    int port() const { return port_; }

    Connection accept() {
        while (true) {
            const int fd = ::accept(sock_.fd(), nullptr, nullptr);
            if (fd >= 0) return Connection(Socket(fd));
            if (errno != EINTR) throw std::runtime_error(std::string("accept: ") + std::strerror(errno));
        }
    }

private:
    Socket sock_;
    int port_ = 0;
};

/// Connects, retrying refused attempts until `timeout` elapses.
inline Connection connect_to(const Endpoint& ep, std::chrono::milliseconds timeout) {
    const sockaddr_in addr = detail::resolve(ep);
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true) {
        Socket s(::socket(AF_INET, SOCK_STREAM, 0));
        if (!s.valid()) throw std::runtime_error(std::string("socket failed: ") + std::strerror(errno));
        if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
            return Connection(std::move(s));
        }
        const int err = errno;
        if (std::chrono::steady_clock::now() >= deadline) {
            throw ConnectRefused("cannot connect to " + ep.host + ":" + std::to_string(ep.port) + ": " +
                                 std::strerror(err));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
}

}  // namespace fcmhe
