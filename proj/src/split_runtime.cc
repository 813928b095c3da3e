// Copyright 2026 The esplit Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "esplit/split_runtime.h"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <memory>
#include <random>
#include <thread>
#include <utility>

#include "esplit/bytes.h"
#include "esplit/error.h"
#include "esplit/training.h"

namespace esplit {
namespace {

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Tensor image_tensor(std::span<const uint8_t> pixels, int c, int h, int w) {
  Tensor t({1, c, h, w});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = pixel_to_input(pixels[static_cast<size_t>(i)]);
  return t;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const size_t lo = static_cast<size_t>(pos);
  const size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// ---- Loopback socket transport ---------------------------------------------------
//
// Request: u32 frame length (0 ends the session), frame bytes.
// Reply:   u8 status (0 ok, else ErrorKind), i32 prediction, f64 server_s,
//          str error message.

class Fd {
 public:
  explicit Fd(int fd = -1) : fd_(fd) {}
  Fd(Fd&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Fd& operator=(Fd&& o) noexcept {
    reset();
    fd_ = std::exchange(o.fd_, -1);
    return *this;
  }
  ~Fd() { reset(); }
  int get() const { return fd_; }
  void reset() {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
  }

 private:
  int fd_;
};

[[noreturn]] void sys_fail(const std::string& what) {
  fail(ErrorKind::kTransport, what + ": " + std::strerror(errno));
}

void send_all(int fd, std::span<const uint8_t> b) {
  size_t off = 0;
  while (off < b.size()) {
    const ssize_t n = ::send(fd, b.data() + off, b.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) sys_fail("send");
    off += static_cast<size_t>(n);
  }
}

// False on a clean end of stream before the first byte.
bool recv_all(int fd, std::span<uint8_t> b) {
  size_t off = 0;
  while (off < b.size()) {
    const ssize_t n = ::recv(fd, b.data() + off, b.size() - off, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n < 0) sys_fail("recv");
    if (n == 0) {
      if (off == 0) return false;
      fail(ErrorKind::kTransport, "connection closed mid-message");
    }
    off += static_cast<size_t>(n);
  }
  return true;
}

uint32_t recv_u32(int fd) {
  uint8_t b[4];
  if (!recv_all(fd, b)) fail(ErrorKind::kTransport, "connection closed");
  return ByteReader(b, Endian::kBig, "length").get<uint32_t>();
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

void serve(Fd listener, const Checkpoint* ckpt, ComputeProfile server) {
  Fd conn(::accept(listener.get(), nullptr, nullptr));
  if (conn.get() < 0) return;
  set_nodelay(conn.get());
  try {
    for (;;) {
      const uint32_t len = recv_u32(conn.get());
      if (len == 0) return;
      std::vector<uint8_t> frame(len);
      recv_all(conn.get(), frame);
      ByteWriter w(Endian::kBig);
      try {
        const ServerResult r = server_decode_infer(frame, *ckpt, server);
        w.put<uint8_t>(0);
        w.put<int32_t>(r.prediction);
        w.put<double>(r.server_s);
        w.put_string("");
      } catch (const Error& e) {
        w.put<uint8_t>(static_cast<uint8_t>(e.kind()));
        w.put<int32_t>(-1);
        w.put<double>(0.0);
        w.put_string(e.what());
      }
      const std::vector<uint8_t>& body = w.bytes();
      ByteWriter head(Endian::kBig);
      head.put(static_cast<uint32_t>(body.size()));
      send_all(conn.get(), head.bytes());
      send_all(conn.get(), body);
    }
  } catch (const std::exception&) {
    // The client sees the closed connection as a transport error.
  }
}

class SocketClient {
 public:
  SocketClient(const Checkpoint& ckpt, const ComputeProfile& server) {
    Fd listener(::socket(AF_INET, SOCK_STREAM, 0));
    if (listener.get() < 0) sys_fail("socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(listener.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) sys_fail("bind");
    if (::listen(listener.get(), 1) != 0) sys_fail("listen");
    socklen_t len = sizeof(addr);
    if (::getsockname(listener.get(), reinterpret_cast<sockaddr*>(&addr), &len) != 0) sys_fail("getsockname");
    server_ = std::thread(serve, std::move(listener), &ckpt, server);
    conn_ = Fd(::socket(AF_INET, SOCK_STREAM, 0));
    if (conn_.get() < 0 || ::connect(conn_.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      const std::string msg = std::strerror(errno);
      conn_.reset();
      server_.join();
      fail(ErrorKind::kTransport, "connect: " + msg);
    }
    set_nodelay(conn_.get());
  }

  ~SocketClient() {
    if (conn_.get() >= 0) {
      try {
        const uint8_t zero[4] = {0, 0, 0, 0};
        send_all(conn_.get(), zero);
      } catch (const Error&) {
      }
      conn_.reset();
    }
    if (server_.joinable()) server_.join();
  }

  ServerResult infer(std::span<const uint8_t> frame) {
    ByteWriter head(Endian::kBig);
    head.put(static_cast<uint32_t>(frame.size()));
    send_all(conn_.get(), head.bytes());
    send_all(conn_.get(), frame);
    std::vector<uint8_t> body(recv_u32(conn_.get()));
    recv_all(conn_.get(), body);
    ByteReader r(body, Endian::kBig, "server reply");
    const uint8_t status = r.get<uint8_t>();
    ServerResult out;
    out.prediction = r.get<int32_t>();
    out.server_s = r.get<double>();
    const std::string msg = r.get_string();
    if (status != 0) fail(static_cast<ErrorKind>(status), "server: " + msg);
    return out;
  }

 private:
  std::thread server_;
  Fd conn_;
};

}  // namespace

// ---- Channel and cost model --------------------------------------------------------

void ChannelProfile::validate() const {
  if (!(data_rate_bps > 0) || !std::isfinite(data_rate_bps)) {
    fail(ErrorKind::kConfig, "data_rate_bps must be positive, got " + std::to_string(data_rate_bps));
  }
  if (!(overhead_bytes >= 0)) fail(ErrorKind::kConfig, "overhead_bytes must be non-negative");
  if (!(loss_probability >= 0 && loss_probability < 1)) {
    fail(ErrorKind::kConfig, "loss_probability must be in [0, 1)");
  }
}

double simulate_channel(size_t payload_bytes, const ChannelProfile& profile) {
  profile.validate();
  return (static_cast<double>(payload_bytes) + profile.overhead_bytes) * 8.0 / profile.data_rate_bps;
}

double ComputeProfile::cost(int64_t macs, double wall_s) const {
  return measured ? wall_s * multiplier : static_cast<double>(macs) * seconds_per_mac;
}

// A phone-class core at roughly 0.5 GMAC/s and a server GPU 100x faster.
ComputeProfile default_mobile_profile() { return {"mobile", 2e-9, false, 1.0}; }
ComputeProfile default_server_profile() { return {"server", 2e-11, false, 1.0}; }

LatencyReport LatencyReport::make(double encode_s, double comm_s, double server_s, size_t payload_bytes) {
  LatencyReport r;
  r.encode_s = encode_s;
  r.comm_s = comm_s;
  r.server_s = server_s;
  r.total_s = encode_s + comm_s + server_s;
  r.payload_bytes = payload_bytes;
  return r;
}

// ---- Endpoints ----------------------------------------------------------------------

ClientResult client_encode(const Checkpoint& ckpt, const Tensor& image, const ComputeProfile& mobile) {
  if (ckpt.stage == StageTag::kTeacher) fail(ErrorKind::kInvalidArgument, "client_encode needs a split student");
  if (image.rank() != 3) fail(ErrorKind::kShape, "client_encode expects [C,H,W], got " + shape_str(image.shape()));
  const double t0 = now_s();
  const Tensor x = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  const Tensor z = encoder_forward(ckpt, x).reshaped(ckpt.latent_shape());
  ClientResult r;
  r.frame = serialize_frame(encode_bottleneck(ckpt, z));
  r.encode_s = mobile.cost(count_macs(ckpt.spec, Side::kMobile), now_s() - t0);
  return r;
}

ServerResult server_decode_infer(std::span<const uint8_t> frame, const Checkpoint& ckpt,
                                 const ComputeProfile& server) {
  const double t0 = now_s();
  const PayloadFrame f = parse_frame(frame);
  ServerResult r;
  int64_t macs;
  if (f.codec == Codec::kRaw) {
    if (f.bitstream.size() != static_cast<size_t>(f.channels) * f.height * f.width) {
      fail(ErrorKind::kFormat, "raw frame size disagrees with its shape");
    }
    if (f.channels != ckpt.spec.in_ch || f.height != ckpt.spec.in_h || f.width != ckpt.spec.in_w) {
      fail(ErrorKind::kShape, "raw frame shape does not match the model input");
    }
    r.logits = full_forward(ckpt, image_tensor(f.bitstream, f.channels, f.height, f.width));
    macs = count_macs(ckpt.spec, Side::kAll);
  } else {
    r.logits = server_forward(ckpt, decode_bottleneck(f, ckpt));
    macs = count_macs(ckpt.spec, Side::kServer);
  }
  r.prediction = argmax_rows(r.logits)[0];
  r.server_s = server.cost(macs, now_s() - t0);
  return r;
}

Tensor monolithic_logits(const Checkpoint& ckpt, const Tensor& image) {
  if (image.rank() != 3) fail(ErrorKind::kShape, "monolithic_logits expects [C,H,W]");
  return predict_logits(ckpt, image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}), default_mode(ckpt));
}

const char* transport_name(Transport t) { return t == Transport::kSocket ? "socket" : "inproc"; }

Transport transport_from_name(const std::string& name) {
  if (name == "inproc") return Transport::kInProcess;
  if (name == "socket") return Transport::kSocket;
  fail(ErrorKind::kConfig, "unknown transport '" + name + "' (expected inproc or socket)");
}

// ---- Runs ---------------------------------------------------------------------------

LatencySummary summarize(std::span<const SampleResult> samples) {
  LatencySummary s;
  if (samples.empty()) return s;
  std::vector<double> totals;
  size_t correct = 0;
  for (const SampleResult& r : samples) {
    s.mean_encode_s += r.latency.encode_s;
    s.mean_comm_s += r.latency.comm_s;
    s.mean_server_s += r.latency.server_s;
    s.mean_total_s += r.latency.total_s;
    s.mean_payload_bytes += static_cast<double>(r.latency.payload_bytes);
    totals.push_back(r.latency.total_s);
    correct += r.delivered && r.prediction == r.label;
  }
  const double n = static_cast<double>(samples.size());
  s.mean_encode_s /= n;
  s.mean_comm_s /= n;
  s.mean_server_s /= n;
  s.mean_total_s /= n;
  s.mean_payload_bytes /= n;
  s.accuracy = static_cast<double>(correct) / n;
  s.p50_total_s = percentile(totals, 0.5);
  s.p95_total_s = percentile(totals, 0.95);
  return s;
}

SplitRun run_split(const Dataset& data, const Checkpoint& ckpt, const SplitOptions& opts) {
  opts.channel.validate();
  const size_t n = opts.limit == 0 ? data.size() : std::min(opts.limit, data.size());
  const Task task = checkpoint_task(ckpt);
  std::mt19937_64 rng(opts.seed);
  std::bernoulli_distribution lost(opts.channel.loss_probability);
  std::unique_ptr<SocketClient> sock;
  if (opts.transport == Transport::kSocket) sock = std::make_unique<SocketClient>(ckpt, opts.server);

  SplitRun run;
  run.samples.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const Tensor image = data.images(i, i + 1).reshaped({data.channels, data.height, data.width});
    const ClientResult c = client_encode(ckpt, image, opts.mobile);
    SampleResult s;
    s.label = task_label(data.labels[i], task);
    const double comm = simulate_channel(c.frame.size(), opts.channel);
    double server_s = 0;
    s.delivered = !(opts.channel.loss_probability > 0 && lost(rng));
    if (s.delivered) {
      const ServerResult r = sock ? sock->infer(c.frame) : server_decode_infer(c.frame, ckpt, opts.server);
      s.prediction = r.prediction;
      server_s = r.server_s;
    }
    s.latency = LatencyReport::make(c.encode_s, comm, server_s, c.frame.size());
    run.samples.push_back(s);
  }
  run.summary = summarize(run.samples);
  return run;
}

CsvTable latency_table(const SplitRun& run) {
  CsvTable t;
  t.schema = kLatencySchema;
  t.columns = kLatencyColumns;
  for (size_t i = 0; i < run.samples.size(); ++i) {
    const SampleResult& s = run.samples[i];
    t.add_row({std::to_string(i), std::to_string(s.label), std::to_string(s.prediction),
               std::to_string(s.latency.payload_bytes), format_double(s.latency.encode_s),
               format_double(s.latency.comm_s), format_double(s.latency.server_s),
               format_double(s.latency.total_s)});
  }
  return t;
}

std::vector<ScenarioRow> compare_scenarios(const Dataset& data, const Checkpoint& teacher,
                                           std::span<const Checkpoint> students,
                                           std::span<const std::string> student_names, const SplitOptions& opts) {
  if (teacher.stage != StageTag::kTeacher) fail(ErrorKind::kInvalidArgument, "compare_scenarios: not a teacher");
  if (students.size() != student_names.size()) {
    fail(ErrorKind::kInvalidArgument, "compare_scenarios: one name per student required");
  }
  opts.channel.validate();
  const size_t n = opts.limit == 0 ? data.size() : std::min(opts.limit, data.size());
  const Dataset subset = data.slice(0, n);
  const int64_t teacher_macs = count_macs(teacher.spec, Side::kAll);
  const double teacher_acc = evaluate_accuracy(teacher, subset, BottleneckMode::kContinuous);
  std::vector<ScenarioRow> rows;

  ScenarioRow local;
  local.scenario = "local";
  local.model = "teacher";
  local.accuracy = teacher_acc;
  local.encode_s = opts.mobile.cost(teacher_macs, 0.0);
  local.total_s = local.encode_s;
  rows.push_back(local);

  ScenarioRow edge;
  edge.scenario = "edge";
  edge.model = "teacher";
  edge.accuracy = teacher_acc;
  const size_t raw_bytes =
      raw_image_frame(subset.image(0), subset.channels, subset.height, subset.width).wire_size();
  edge.payload_bytes = static_cast<double>(raw_bytes);
  edge.comm_s = simulate_channel(raw_bytes, opts.channel);
  edge.server_s = opts.server.cost(teacher_macs, 0.0);
  edge.total_s = edge.encode_s + edge.comm_s + edge.server_s;
  rows.push_back(edge);

  for (size_t k = 0; k < students.size(); ++k) {
    const SplitRun run = run_split(subset, students[k], opts);
    ScenarioRow r;
    r.scenario = "split";
    r.model = student_names[k];
    if (auto it = students[k].metadata.find("beta"); it != students[k].metadata.end()) r.beta = std::stod(it->second);
    r.accuracy = run.summary.accuracy;
    r.payload_bytes = run.summary.mean_payload_bytes;
    r.encode_s = run.summary.mean_encode_s;
    r.comm_s = run.summary.mean_comm_s;
    r.server_s = run.summary.mean_server_s;
    r.total_s = r.encode_s + r.comm_s + r.server_s;
    rows.push_back(r);
  }
  return rows;
}

CsvTable scenario_table(std::span<const ScenarioRow> rows) {
  CsvTable t;
  t.schema = kScenarioSchema;
  t.columns = kScenarioColumns;
  for (const ScenarioRow& r : rows) {
    t.add_row({r.scenario, r.model, format_double(r.beta), format_double(r.accuracy), format_double(r.payload_bytes),
               format_double(r.encode_s), format_double(r.comm_s), format_double(r.server_s),
               format_double(r.total_s)});
  }
  return t;
}

}  // namespace esplit
