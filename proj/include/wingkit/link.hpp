#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "wingkit/error.hpp"
#include "wingkit/estimation.hpp"
#include "wingkit/harness.hpp"

namespace wingkit {

using Bytes = std::vector<std::uint8_t>;

// Pulse widths in microseconds: throttle, aileron, elevator, rudder.
struct PpmFrame {
  std::array<std::uint16_t, 4> widths{1000, 1500, 1500, 1500};

  bool valid() const;
  bool operator==(const PpmFrame&) const = default;
};

// Control as carried on the radio: throttle, aileron, elevator as a fraction
// of max pitch command, and heading error as a fraction of pi.
struct StickControl {
  std::array<float, 4> values{0.0f, 0.0f, 0.0f, 0.0f};
  bool operator==(const StickControl&) const = default;
};

StickControl to_stick(const Control& u, double current_yaw);
Control from_stick(const StickControl& s, double current_yaw);
// Round trip through the float wire representation.
Control through_wire(const Control& u, double current_yaw);

PpmFrame encode_ppm(const Control& u, double current_yaw = 0.0);
PpmFrame encode_ppm(const StickControl& s);
// Throws OutOfRange for any width outside [1000, 2000].
Control decode_ppm(const PpmFrame& f, double current_yaw = 0.0);

enum class FlightMode : std::uint8_t { Manual = 0, Autonomous = 1 };
std::string to_string(FlightMode m);

struct FrameMsg {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t pixfmt = 0;  // 0 = RGB8
  Bytes pixels;
  bool operator==(const FrameMsg&) const = default;
};

struct ControlMsg {
  StickControl stick;
  PpmFrame ppm;
  bool operator==(const ControlMsg&) const = default;
};

struct ModeMsg {
  FlightMode mode = FlightMode::Autonomous;
  bool operator==(const ModeMsg&) const = default;
};

struct SafetyMsg {
  bool flag = false;
  float last_ssim = 0.0f;
  bool operator==(const SafetyMsg&) const = default;
};

// Acknowledges the message whose seq the header carries.
struct AckMsg {
  bool operator==(const AckMsg&) const = default;
};

using LinkMessage = std::variant<FrameMsg, ControlMsg, ModeMsg, SafetyMsg, AckMsg>;

FrameMsg frame_message(const Frame& f);
Frame message_frame(const FrameMsg& m);

struct Envelope {
  LinkMessage message;
  std::uint32_t seq = 0;
  std::uint64_t timestamp_us = 0;
  bool operator==(const Envelope&) const = default;
};

inline constexpr std::size_t kHeaderSize = 22;  // magic through payload_len
inline constexpr std::size_t kCrcSize = 4;
inline constexpr std::uint8_t kWireVersion = 1;

Bytes serialize(const LinkMessage& msg, std::uint32_t seq, std::uint64_t timestamp_us);

class DecodeError : public Error {
 public:
  enum class Kind { BadMagic, BadCrc, Truncated, UnknownType, Malformed };
  DecodeError(Kind kind, const std::string& what);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

std::string to_string(DecodeError::Kind k);

// Throws DecodeError.
Envelope deserialize(const Bytes& bytes);

enum class Channel { Downlink, Uplink };  // air -> ground, ground -> air

class Transport {
 public:
  virtual ~Transport() = default;
  // Throws TransportClosed.
  virtual void send(Channel ch, const Bytes& datagram) = 0;
  // Everything pending on `ch`, waiting for up to `expected` datagrams where
  // the transport has real latency. Throws TransportClosed.
  virtual std::vector<Bytes> receive(Channel ch, std::size_t expected) = 0;
};

class InMemoryTransport : public Transport {
 public:
  void send(Channel ch, const Bytes& datagram) override;
  std::vector<Bytes> receive(Channel ch, std::size_t expected) override;

  void close() { closed_ = true; }
  // Closes the transport once this many datagrams have been sent.
  void close_after(std::size_t sends) { close_after_ = sends; }
  std::size_t sent() const { return sent_; }

 private:
  std::deque<Bytes>& queue(Channel ch) { return ch == Channel::Downlink ? down_ : up_; }
  std::deque<Bytes> down_, up_;
  bool closed_ = false;
  std::optional<std::size_t> close_after_;
  std::size_t sent_ = 0;
};

// Two sockets on 127.0.0.1: the air side at `port`, the ground side at
// `port + 1`. Throws IoFailure when either cannot be bound.
class UdpLoopbackTransport : public Transport {
 public:
  explicit UdpLoopbackTransport(std::uint16_t port = 47801, int timeout_ms = 200);
  ~UdpLoopbackTransport() override;
  UdpLoopbackTransport(const UdpLoopbackTransport&) = delete;
  UdpLoopbackTransport& operator=(const UdpLoopbackTransport&) = delete;

  void send(Channel ch, const Bytes& datagram) override;
  std::vector<Bytes> receive(Channel ch, std::size_t expected) override;

 private:
  int air_fd_ = -1;
  int ground_fd_ = -1;
  std::uint16_t port_;
  int timeout_ms_;
};

struct LinkConfig {
  double tick_rate = 20.0;  // Hz
  double drop_probability = 0.0;
  int latency_ticks = 0;
  std::uint64_t seed = 0;

  bool valid() const;
};

struct PilotEvent {
  int tick = 0;
  FlightMode mode = FlightMode::Manual;
  StickControl stick;  // held while in manual mode
};

struct LoopOptions {
  GuidanceGains leader_gains;
  RenderConfig render;
  std::vector<PilotEvent> pilot;
  // Frames at these ticks are replaced by seeded noise before transmission.
  std::vector<int> degraded_ticks;
  // On a safety flag the aircraft drops to manual with this stick.
  bool safety_override = true;
  StickControl failsafe_stick{{0.8f, 0.0f, 0.0f, 0.0f}};
};

struct LoopTick {
  int tick = 0;
  FlightMode mode = FlightMode::Autonomous;
  std::optional<double> ssim;
  bool dropped = false;
  PpmFrame ppm;
  bool safety = false;  // SafetyMsg emitted this tick
};

struct LoopResult {
  std::vector<LoopTick> ticks;
  Trajectory follower;
  Trajectory leader;
  bool closed_early = false;
};

// One logical ticker with a simulated clock: render on the aircraft, frame
// over the downlink, SSIM monitor and policy on the ground, control over the
// uplink, plant step. Stops cleanly with a partial log on TransportClosed.
LoopResult run_loop(const Scenario& scenario, const DynParams& params,
                    const FollowerPolicy& policy, QualityMonitor monitor,
                    const LinkConfig& config, Transport& transport,
                    const LoopOptions& options = {});

// The policy as the aircraft sees it through the float control channel; a
// linkless trial with this policy matches a lossless run_loop bit for bit.
FollowerPolicy over_wire(FollowerPolicy policy);

void write_loop_log(std::ostream& out, const LoopResult& result);

}  // namespace wingkit
