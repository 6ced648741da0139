#include "wingkit/link.hpp"

#include <algorithm>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <map>
#include <ostream>
#include <random>
#include <set>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>
#include <zlib.h>

#include <nlohmann/json.hpp>

#include "wingkit/rng.hpp"

namespace wingkit {

bool PpmFrame::valid() const {
  return std::all_of(widths.begin(), widths.end(),
                     [](std::uint16_t w) { return w >= 1000 && w <= 2000; });
}

StickControl to_stick(const Control& u, double current_yaw) {
  const Control c = clamp_control(u);
  return {{static_cast<float>(c.throttle), static_cast<float>(c.aileron),
           static_cast<float>(c.pitch_cmd / kMaxPitchCmd),
           static_cast<float>(wrap_angle(c.yaw_cmd - current_yaw) / kPi)}};
}

Control from_stick(const StickControl& s, double current_yaw) {
  Control u;
  u.throttle = s.values[0];
  u.aileron = s.values[1];
  u.pitch_cmd = static_cast<double>(s.values[2]) * kMaxPitchCmd;
  u.yaw_cmd = wrap_angle(current_yaw + static_cast<double>(s.values[3]) * kPi);
  return clamp_control(u);
}

Control through_wire(const Control& u, double current_yaw) {
  const StickControl s = to_stick(u, current_yaw);
  const Envelope e = deserialize(serialize(ControlMsg{s, encode_ppm(s)}, 0, 0));
  return from_stick(std::get<ControlMsg>(e.message).stick, current_yaw);
}

namespace {

std::uint16_t to_width(double centre, double half_span, double value) {
  const double w = std::round(centre + half_span * std::clamp(value, -1.0, 1.0));
  return static_cast<std::uint16_t>(std::clamp(w, 1000.0, 2000.0));
}

}  // namespace

PpmFrame encode_ppm(const StickControl& s) {
  PpmFrame f;
  f.widths[0] = to_width(1000.0, 1000.0, std::clamp<double>(s.values[0], 0.0, 1.0));
  for (int i = 1; i < 4; ++i) f.widths[i] = to_width(1500.0, 500.0, s.values[i]);
  return f;
}

PpmFrame encode_ppm(const Control& u, double current_yaw) {
  const Control c = clamp_control(u);
  PpmFrame f;
  f.widths[0] = to_width(1000.0, 1000.0, c.throttle);
  f.widths[1] = to_width(1500.0, 500.0, c.aileron);
  f.widths[2] = to_width(1500.0, 500.0, c.pitch_cmd / kMaxPitchCmd);
  f.widths[3] = to_width(1500.0, 500.0, wrap_angle(c.yaw_cmd - current_yaw) / kPi);
  return f;
}

Control decode_ppm(const PpmFrame& f, double current_yaw) {
  if (!f.valid()) throw OutOfRange("PPM width outside [1000, 2000] us");
  Control u;
  u.throttle = (f.widths[0] - 1000.0) / 1000.0;
  u.aileron = (f.widths[1] - 1500.0) / 500.0;
  u.pitch_cmd = (f.widths[2] - 1500.0) / 500.0 * kMaxPitchCmd;
  u.yaw_cmd = wrap_angle(current_yaw + (f.widths[3] - 1500.0) / 500.0 * kPi);
  return u;
}

std::string to_string(FlightMode m) {
  return m == FlightMode::Manual ? "manual" : "autonomous";
}

FrameMsg frame_message(const Frame& f) {
  if (f.width > 0xffff || f.height > 0xffff) throw InvalidArgument("frame too large for the wire");
  return {static_cast<std::uint16_t>(f.width), static_cast<std::uint16_t>(f.height), 0, f.pixels};
}

Frame message_frame(const FrameMsg& m) {
  Frame f;
  f.width = m.width;
  f.height = m.height;
  f.pixels = m.pixels;
  return f;
}

// Wire encoding -------------------------------------------------------------

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'F', 'W', 'N', 'G'};

class Writer {
 public:
  explicit Writer(Bytes& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { le(v, 2); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const Bytes& b) { out_.insert(out_.end(), b.begin(), b.end()); }

 private:
  void le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes& out_;
};

class Reader {
 public:
  Reader(const std::uint8_t* p, std::size_t n) : p_(p), n_(n) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  Bytes raw(std::size_t n) {
    need(n);
    Bytes b(p_ + pos_, p_ + pos_ + n);
    pos_ += n;
    return b;
  }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  void need(std::size_t k) const {
    if (pos_ + k > n_) throw DecodeError(DecodeError::Kind::Truncated, "payload shorter than its fields");
  }
  std::uint64_t le(int k) {
    need(static_cast<std::size_t>(k));
    std::uint64_t v = 0;
    for (int i = 0; i < k; ++i) v |= static_cast<std::uint64_t>(p_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(k);
    return v;
  }
  const std::uint8_t* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

void write_payload(Writer& w, const LinkMessage& msg) {
  std::visit(
      [&w](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, FrameMsg>) {
          w.u16(m.width);
          w.u16(m.height);
          w.u8(m.pixfmt);
          w.raw(m.pixels);
        } else if constexpr (std::is_same_v<T, ControlMsg>) {
          for (float v : m.stick.values) w.f32(v);
          for (auto width : m.ppm.widths) w.u16(width);
        } else if constexpr (std::is_same_v<T, ModeMsg>) {
          w.u8(static_cast<std::uint8_t>(m.mode));
        } else if constexpr (std::is_same_v<T, SafetyMsg>) {
          w.u8(m.flag ? 1 : 0);
          w.f32(m.last_ssim);
        }
      },
      msg);
}

LinkMessage read_payload(std::uint8_t type, Reader& r) {
  using K = DecodeError::Kind;
  LinkMessage msg;
  switch (type) {
    case 0: {
      FrameMsg m;
      m.width = r.u16();
      m.height = r.u16();
      m.pixfmt = r.u8();
      if (m.pixfmt != 0) throw DecodeError(K::Malformed, "unknown pixel format");
      m.pixels = r.raw(static_cast<std::size_t>(m.width) * m.height * 3);
      msg = std::move(m);
      break;
    }
    case 1: {
      ControlMsg m;
      for (float& v : m.stick.values) v = r.f32();
      for (auto& width : m.ppm.widths) width = r.u16();
      if (!m.ppm.valid()) throw DecodeError(K::Malformed, "PPM width out of range");
      msg = m;
      break;
    }
    case 2: {
      const auto mode = r.u8();
      if (mode > 1) throw DecodeError(K::Malformed, "unknown flight mode");
      msg = ModeMsg{static_cast<FlightMode>(mode)};
      break;
    }
    case 3: {
      const auto flag = r.u8();
      if (flag > 1) throw DecodeError(K::Malformed, "safety flag not 0/1");
      SafetyMsg m;
      m.flag = flag == 1;
      m.last_ssim = r.f32();
      msg = m;
      break;
    }
    case 4:
      msg = AckMsg{};
      break;
    default:
      throw DecodeError(K::UnknownType, "message type " + std::to_string(type));
  }
  if (r.remaining() != 0) throw DecodeError(K::Malformed, "payload longer than its fields");
  return msg;
}

}  // namespace

DecodeError::DecodeError(Kind kind, const std::string& what)
    : Error("DecodeError(" + to_string(kind) + "): " + what), kind_(kind) {}

std::string to_string(DecodeError::Kind k) {
  switch (k) {
    case DecodeError::Kind::BadMagic: return "BadMagic";
    case DecodeError::Kind::BadCrc: return "BadCrc";
    case DecodeError::Kind::Truncated: return "Truncated";
    case DecodeError::Kind::UnknownType: return "UnknownType";
    case DecodeError::Kind::Malformed: return "Malformed";
  }
  return "Unknown";
}

Bytes serialize(const LinkMessage& msg, std::uint32_t seq, std::uint64_t timestamp_us) {
  Bytes payload;
  Writer pw(payload);
  write_payload(pw, msg);

  Bytes out;
  out.reserve(kHeaderSize + payload.size() + kCrcSize);
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  Writer w(out);
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(msg.index()));
  w.u32(seq);
  w.u64(timestamp_us);
  w.u32(static_cast<std::uint32_t>(payload.size()));
  w.raw(payload);
  w.u32(crc_of(out.data() + kMagic.size(), out.size() - kMagic.size()));
  return out;
}

Envelope deserialize(const Bytes& bytes) {
  using K = DecodeError::Kind;
  if (bytes.size() < kMagic.size()) throw DecodeError(K::Truncated, "shorter than the magic");
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin())) {
    throw DecodeError(K::BadMagic, "magic is not FWNG");
  }
  if (bytes.size() < kHeaderSize + kCrcSize) throw DecodeError(K::Truncated, "short header");
  Reader h(bytes.data() + kMagic.size(), kHeaderSize - kMagic.size());
  const auto version = h.u8();
  const auto type = h.u8();
  Envelope env;
  env.seq = h.u32();
  env.timestamp_us = h.u64();
  const std::uint64_t payload_len = h.u32();
  if (bytes.size() < kHeaderSize + payload_len + kCrcSize) {
    throw DecodeError(K::Truncated, "datagram shorter than header + payload + crc");
  }
  if (bytes.size() > kHeaderSize + payload_len + kCrcSize) {
    throw DecodeError(K::Malformed, "trailing bytes after crc");
  }
  const std::size_t body_end = kHeaderSize + payload_len;
  Reader crc_reader(bytes.data() + body_end, kCrcSize);
  if (crc_reader.u32() != crc_of(bytes.data() + kMagic.size(), body_end - kMagic.size())) {
    throw DecodeError(K::BadCrc, "crc mismatch");
  }
  if (version != kWireVersion) throw DecodeError(K::Malformed, "unsupported wire version");
  Reader payload(bytes.data() + kHeaderSize, payload_len);
  env.message = read_payload(type, payload);
  return env;
}

// Transports ------------------------------------------------------------------

void InMemoryTransport::send(Channel ch, const Bytes& datagram) {
  if (closed_) throw TransportClosed("in-memory transport closed");
  queue(ch).push_back(datagram);
  ++sent_;
  if (close_after_ && sent_ >= *close_after_) closed_ = true;
}

std::vector<Bytes> InMemoryTransport::receive(Channel ch, std::size_t) {
  auto& q = queue(ch);
  if (closed_ && q.empty()) throw TransportClosed("in-memory transport closed");
  std::vector<Bytes> out(std::make_move_iterator(q.begin()), std::make_move_iterator(q.end()));
  q.clear();
  return out;
}

namespace {

int bind_loopback(std::uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw IoFailure(std::string("socket: ") + std::strerror(errno));
  const int buf = 4 << 20;
  ::setsockopt(fd, SOL_SOCKET, SO_RCVBUF, &buf, sizeof buf);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string reason = std::strerror(errno);
    ::close(fd);
    throw IoFailure("bind 127.0.0.1:" + std::to_string(port) + ": " + reason);
  }
  return fd;
}

}  // namespace

UdpLoopbackTransport::UdpLoopbackTransport(std::uint16_t port, int timeout_ms)
    : port_(port), timeout_ms_(timeout_ms) {
  air_fd_ = bind_loopback(port);
  try {
    ground_fd_ = bind_loopback(static_cast<std::uint16_t>(port + 1));
  } catch (...) {
    ::close(air_fd_);
    throw;
  }
}

UdpLoopbackTransport::~UdpLoopbackTransport() {
  if (air_fd_ >= 0) ::close(air_fd_);
  if (ground_fd_ >= 0) ::close(ground_fd_);
}

void UdpLoopbackTransport::send(Channel ch, const Bytes& datagram) {
  const bool down = ch == Channel::Downlink;
  sockaddr_in to{};
  to.sin_family = AF_INET;
  to.sin_port = htons(static_cast<std::uint16_t>(down ? port_ + 1 : port_));
  to.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  const ssize_t n = ::sendto(down ? air_fd_ : ground_fd_, datagram.data(), datagram.size(), 0,
                             reinterpret_cast<sockaddr*>(&to), sizeof to);
  if (n != static_cast<ssize_t>(datagram.size())) {
    throw TransportClosed(std::string("sendto: ") + std::strerror(errno));
  }
}

std::vector<Bytes> UdpLoopbackTransport::receive(Channel ch, std::size_t expected) {
  const int fd = ch == Channel::Downlink ? ground_fd_ : air_fd_;
  std::vector<Bytes> out;
  Bytes buf(65536);
  for (;;) {
    const int wait = out.size() < expected ? timeout_ms_ : 0;
    pollfd p{fd, POLLIN, 0};
    const int ready = ::poll(&p, 1, wait);
    if (ready < 0) throw TransportClosed(std::string("poll: ") + std::strerror(errno));
    if (ready == 0) break;
    const ssize_t n = ::recv(fd, buf.data(), buf.size(), 0);
    if (n < 0) throw TransportClosed(std::string("recv: ") + std::strerror(errno));
    out.emplace_back(buf.begin(), buf.begin() + n);
  }
  return out;
}

// Loop ------------------------------------------------------------------------

bool LinkConfig::valid() const {
  return tick_rate > 0.0 && drop_probability >= 0.0 && drop_probability <= 1.0 &&
         latency_ticks >= 0;
}

FollowerPolicy over_wire(FollowerPolicy policy) {
  auto inner = policy.act;
  policy.act = [inner](const FollowerObservation& o) {
    return through_wire(inner(o), o.follower.yaw);
  };
  return policy;
}

namespace {

Frame noise_frame(int width, int height, std::uint64_t seed, int tick) {
  Engine rng = make_engine(seed, "link.degrade", static_cast<std::uint64_t>(tick));
  std::uniform_int_distribution<int> byte(0, 255);
  Frame f(width, height);
  for (auto& p : f.pixels) p = static_cast<std::uint8_t>(byte(rng));
  return f;
}

struct InFlight {
  int release_tick;
  FrameMsg msg;
  Mask mask;
};

}  // namespace

LoopResult run_loop(const Scenario& scenario, const DynParams& params,
                    const FollowerPolicy& policy, QualityMonitor monitor,
                    const LinkConfig& config, Transport& transport,
                    const LoopOptions& options) {
  if (!config.valid()) throw InvalidArgument("invalid link config");
  const RenderConfig render = scenario_render_config(scenario, options.render);
  TrackingSim sim(scenario, params, options.leader_gains, render);

  LoopResult result;
  result.follower.dt = result.leader.dt = scenario.dt;
  result.follower.states.push_back(sim.follower());
  result.leader.states.push_back(sim.leader());

  Engine drop_rng = make_engine(config.seed, "link.drop");
  std::bernoulli_distribution drop(config.drop_probability);
  const std::set<int> degraded(options.degraded_ticks.begin(), options.degraded_ticks.end());
  std::multimap<int, PilotEvent> pilot;
  for (const auto& e : options.pilot) pilot.emplace(e.tick, e);

  // Aircraft side.
  std::deque<InFlight> delay_line;
  std::map<std::uint32_t, Mask> masks_in_flight;
  FlightMode mode = FlightMode::Autonomous;
  StickControl manual_stick = options.failsafe_stick;
  std::uint32_t air_seq = 0;
  // Ground side.
  std::optional<RenderedScene> last_scene;
  std::uint32_t ground_seq = 0;
  ControlHistory history;

  const auto tick_us = [&](int k) {
    return static_cast<std::uint64_t>(std::llround(k * 1e6 / config.tick_rate));
  };

  try {
    while (!sim.done()) {
      const int k = sim.tick();
      const std::uint64_t now_us = tick_us(k);
      LoopTick log;
      log.tick = k;

      // Aircraft: capture and transmit.
      RenderedScene scene = sim.render();
      if (degraded.count(k)) {
        scene.frame = noise_frame(scene.frame.width, scene.frame.height, config.seed, k);
      }
      log.dropped = drop(drop_rng);
      if (!log.dropped) {
        delay_line.push_back({k + config.latency_ticks, frame_message(scene.frame), scene.mask});
      }
      std::size_t frames_sent = 0;
      while (!delay_line.empty() && delay_line.front().release_tick <= k) {
        masks_in_flight[air_seq] = std::move(delay_line.front().mask);
        transport.send(Channel::Downlink,
                       serialize(delay_line.front().msg, air_seq++, now_us));
        delay_line.pop_front();
        ++frames_sent;
      }

      // Ground: frames, quality monitor, pilot, policy.
      std::size_t uplink_sent = 0;
      for (const Bytes& datagram : transport.receive(Channel::Downlink, frames_sent)) {
        const Envelope env = deserialize(datagram);
        const auto* fm = std::get_if<FrameMsg>(&env.message);
        if (!fm) continue;
        RenderedScene received{message_frame(*fm), Mask{}};
        if (auto it = masks_in_flight.find(env.seq); it != masks_in_flight.end()) {
          received.mask = std::move(it->second);
          masks_in_flight.erase(it);
        }
        if (last_scene) {
          const double s = ssim(last_scene->frame, received.frame);
          log.ssim = s;
          const MonitorUpdate up = monitor_update(monitor, s);
          monitor = up.monitor;
          if (up.flag_raised) {
            transport.send(Channel::Uplink,
                           serialize(SafetyMsg{true, static_cast<float>(s)}, ground_seq++, now_us));
            ++uplink_sent;
            log.safety = true;
          }
        }
        last_scene = std::move(received);
      }
      const auto events = pilot.equal_range(k);
      for (auto it = events.first; it != events.second; ++it) {
        transport.send(Channel::Uplink, serialize(ModeMsg{it->second.mode}, ground_seq++, now_us));
        ++uplink_sent;
      }
      const FollowerObservation obs{sim.follower(), sim.leader(),
                                    last_scene ? &*last_scene : nullptr, history,
                                    render.intrinsics};
      const Control wanted = policy.act(obs);
      const StickControl stick = to_stick(wanted, sim.follower().yaw);
      transport.send(Channel::Uplink,
                     serialize(ControlMsg{stick, encode_ppm(stick)}, ground_seq++, now_us));
      ++uplink_sent;

      // Aircraft: apply the newest uplink state.
      std::optional<StickControl> commanded;
      std::size_t ack_count = 0;
      for (const Bytes& datagram : transport.receive(Channel::Uplink, uplink_sent)) {
        const Envelope env = deserialize(datagram);
        if (const auto* m = std::get_if<ModeMsg>(&env.message)) {
          mode = m->mode;
          if (mode == FlightMode::Manual) {
            for (auto it = events.first; it != events.second; ++it) {
              if (it->second.mode == FlightMode::Manual) manual_stick = it->second.stick;
            }
          }
          transport.send(Channel::Downlink, serialize(AckMsg{}, env.seq, now_us));
          ++ack_count;
        } else if (const auto* s = std::get_if<SafetyMsg>(&env.message)) {
          if (s->flag && options.safety_override) {
            mode = FlightMode::Manual;
            manual_stick = options.failsafe_stick;
          }
        } else if (const auto* c = std::get_if<ControlMsg>(&env.message)) {
          commanded = c->stick;
        }
      }
      // Acks are informational; drain them so they never pile up.
      if (ack_count > 0) transport.receive(Channel::Downlink, ack_count);

      const StickControl applied_stick =
          mode == FlightMode::Manual ? manual_stick : commanded.value_or(StickControl{});
      const Control applied = from_stick(applied_stick, sim.follower().yaw);
      log.mode = mode;
      log.ppm = encode_ppm(applied_stick);

      history.push(applied);
      const Control leader_u = sim.advance(applied);
      result.follower.controls.push_back(applied);
      result.follower.states.push_back(sim.follower());
      result.leader.controls.push_back(leader_u);
      result.leader.states.push_back(sim.leader());
      result.ticks.push_back(log);
    }
  } catch (const TransportClosed&) {
    result.closed_early = true;
  }
  return result;
}

void write_loop_log(std::ostream& out, const LoopResult& result) {
  for (const auto& t : result.ticks) {
    nlohmann::ordered_json row;
    row["tick"] = t.tick;
    row["mode"] = to_string(t.mode);
    row["ssim"] = t.ssim ? nlohmann::ordered_json(*t.ssim) : nlohmann::ordered_json(nullptr);
    row["dropped"] = t.dropped;
    row["ppm"] = t.ppm.widths;
    out << row.dump() << '\n';
  }
}

}  // namespace wingkit
