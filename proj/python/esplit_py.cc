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


// Python bindings: datasets, checkpoints, training recipes, inference, the
// entropy coder and the split runtime.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "esplit/config.h"
#include "esplit/error.h"
#include "esplit/frame.h"
#include "esplit/hashing.h"
#include "esplit/range_coder.h"
#include "esplit/split_runtime.h"

namespace py = pybind11;

namespace esplit {
namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array a(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return a;
}

py::bytes to_bytes(std::span<const uint8_t> b) {
  return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

std::vector<uint8_t> from_bytes(const py::bytes& b) {
  const std::string s = b;
  return {s.begin(), s.end()};
}

py::dict rd_dict(const RDPoint& p) {
  py::dict d;
  d["beta_id"] = p.beta_id;
  d["beta"] = p.beta;
  d["bytes_per_sample"] = p.bytes_per_sample;
  d["bits_per_pixel"] = p.bits_per_pixel;
  d["accuracy"] = p.accuracy;
  d["analytic_bits"] = p.analytic_bits;
  d["coded_bits"] = p.coded_bits;
  d["escapes"] = p.escapes;
  return d;
}

RunConfig parse_config(const std::string& json_text) {
  return json_text.empty() ? default_config() : config_from_json(json_text);
}

CdfTable make_table(std::vector<uint32_t> cdf, int precision) {
  CdfTable t;
  t.cdf = std::move(cdf);
  t.precision = precision;
  validate_cdf_table(t);
  return t;
}

}  // namespace
}  // namespace esplit

PYBIND11_MODULE(_core, m) {
  using namespace esplit;
  m.doc() = "Entropic split computing: training, coding and split inference";

  static py::exception<Error> error_type(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      // args = (kind, message)
      py::object args = py::make_tuple(error_kind_name(e.kind()), e.what());
      PyErr_SetObject(error_type.ptr(), args.ptr());
    }
  });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("channels", &Dataset::channels)
      .def_readonly("height", &Dataset::height)
      .def_readonly("width", &Dataset::width)
      .def("__len__", &Dataset::size)
      .def_property_readonly("labels", [](const Dataset& d) { return std::vector<int>(d.labels.begin(), d.labels.end()); })
      .def("images", [](const Dataset& d, size_t begin, size_t end) { return to_array(d.images(begin, end)); },
           py::arg("begin"), py::arg("end"), "Network input [N, C, H, W] for samples [begin, end).")
      .def("task_labels",
           [](const Dataset& d, const std::string& task) {
             return d.task_labels(0, d.size(), task_from_name(task));
           },
           py::arg("task") = "digit")
      .def("slice", &Dataset::slice)
      .def("save", [](const Dataset& d, const std::string& path) { save_dataset(d, path); });

  m.def("make_digits", [](size_t n, uint64_t seed, int image_size) {
    return make_digits(n, seed, digit_options_for(image_size));
  }, py::arg("n"), py::arg("seed"), py::arg("image_size") = 32);
  m.def("load_dataset", &load_dataset);

  m.def("default_config_json", [] { return config_to_json(default_config()); });
  m.def("normalize_config", [](const std::string& j) { return config_to_json(config_from_json(j)); },
        "Parse, validate and re-emit a config with every key filled in.");
  m.def("load_train_set", [](const std::string& j) { return load_train_set(parse_config(j)); },
        py::arg("config_json") = "");
  m.def("load_test_set", [](const std::string& j) { return load_test_set(parse_config(j)); },
        py::arg("config_json") = "");

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("stage", [](const Checkpoint& c) { return stage_tag_name(c.stage); })
      .def_property_readonly("metadata", [](const Checkpoint& c) { return c.metadata; })
      .def_property_readonly("latent_shape", &Checkpoint::latent_shape)
      .def_property_readonly("has_prior", &Checkpoint::has_prior)
      .def_property_readonly("num_tables", [](const Checkpoint& c) { return c.tables.size(); })
      .def("hash", &checkpoint_hash)
      .def("params_hash", [](const Checkpoint& c, const std::string& prefix) { return params_hash(c.params, prefix); },
           py::arg("prefix") = "")
      .def("save", [](const Checkpoint& c, const std::string& path) { save_checkpoint(c, path); })
      .def("to_bytes", [](const Checkpoint& c) { return to_bytes(serialize_checkpoint(c)); });
  m.def("load_checkpoint", &load_checkpoint);
  m.def("checkpoint_from_bytes", [](const py::bytes& b) { return parse_checkpoint(from_bytes(b)); });

  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("checkpoint", &TrainResult::ckpt)
      .def_property_readonly("log", [](const TrainResult& r) {
        py::list out;
        for (const EpochLog& e : r.log) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["lr"] = e.lr;
          d["loss"] = e.loss;
          d["distortion"] = e.distortion;
          d["rate_bits"] = e.rate_bits;
          out.append(d);
        }
        return out;
      });

  // Recipes take the config as JSON; empty means the defaults.
  m.def("train_teacher", [](const Dataset& d, const std::string& j) { return recipe_teacher(d, parse_config(j)); },
        py::arg("train"), py::arg("config_json") = "", py::call_guard<py::gil_scoped_release>());
  m.def("train_stage1",
        [](const Checkpoint& t, const Dataset& d, double beta, uint16_t beta_id, const std::string& j) {
          return recipe_stage1(t, d, parse_config(j), beta, beta_id);
        },
        py::arg("teacher"), py::arg("train"), py::arg("beta"), py::arg("beta_id") = 0, py::arg("config_json") = "",
        py::call_guard<py::gil_scoped_release>());
  m.def("train_stage2",
        [](const Checkpoint& s1, const Checkpoint& t, const Dataset& d, const std::string& j) {
          return recipe_stage2(s1, t, d, parse_config(j));
        },
        py::arg("stage1"), py::arg("teacher"), py::arg("train"), py::arg("config_json") = "",
        py::call_guard<py::gil_scoped_release>());
  m.def("train_end2end",
        [](const Checkpoint& t, const Dataset& d, const std::string& j) { return recipe_end2end(t, d, parse_config(j)); },
        py::arg("teacher"), py::arg("train"), py::arg("config_json") = "", py::call_guard<py::gil_scoped_release>());
  m.def("train_crbq",
        [](const Checkpoint& t, const Dataset& d, const std::string& j) { return recipe_crbq(t, d, parse_config(j)); },
        py::arg("teacher"), py::arg("train"), py::arg("config_json") = "", py::call_guard<py::gil_scoped_release>());
  m.def("finetune_head",
        [](const Checkpoint& s, const std::string& task, const Dataset& d, const std::string& j) {
          return recipe_head(s, task_from_name(task), d, parse_config(j));
        },
        py::arg("student"), py::arg("task"), py::arg("train"), py::arg("config_json") = "",
        py::call_guard<py::gil_scoped_release>());

  m.def("predict_logits",
        [](const Checkpoint& c, const Array& images) { return to_array(predict_logits(c, to_tensor(images), default_mode(c))); },
        py::arg("checkpoint"), py::arg("images"));
  m.def("evaluate_accuracy",
        [](const Checkpoint& c, const Dataset& d) { return evaluate_accuracy(c, d, default_mode(c)); });
  m.def("eval_rd", [](const Checkpoint& c, const Dataset& d) { return rd_dict(eval_rd(c, d)); });

  m.def("encode_symbols",
        [](const std::vector<int>& symbols, std::vector<uint32_t> cdf, int precision) {
          return to_bytes(encode_symbols(symbols, make_table(std::move(cdf), precision)).bytes);
        },
        py::arg("symbols"), py::arg("cdf"), py::arg("precision") = kDefaultPrecision);
  m.def("decode_symbols",
        [](const py::bytes& data, std::vector<uint32_t> cdf, size_t count, int precision) {
          return decode_symbols({from_bytes(data)}, make_table(std::move(cdf), precision), count);
        },
        py::arg("data"), py::arg("cdf"), py::arg("count"), py::arg("precision") = kDefaultPrecision);

  m.def("client_encode",
        [](const Checkpoint& c, const Array& image) {
          return to_bytes(client_encode(c, to_tensor(image), default_mobile_profile()).frame);
        },
        py::arg("checkpoint"), py::arg("image"), "One [C, H, W] image to a wire frame.");
  m.def("server_infer",
        [](const py::bytes& frame, const Checkpoint& c) {
          const ServerResult r = server_decode_infer(from_bytes(frame), c, default_server_profile());
          return py::make_tuple(r.prediction, to_array(r.logits));
        },
        py::arg("frame"), py::arg("checkpoint"), "Returns (prediction, logits).");
  m.def("frame_crc_ok", [](const py::bytes& frame) { return frame_crc_ok(from_bytes(frame)); });
  m.def("simulate_channel",
        [](size_t bytes, double rate_bps, double overhead) {
          ChannelProfile p;
          p.data_rate_bps = rate_bps;
          p.overhead_bytes = overhead;
          p.validate();
          return simulate_channel(bytes, p);
        },
        py::arg("payload_bytes"), py::arg("rate_bps") = kDefaultDataRateBps, py::arg("overhead_bytes") = 0.0);
  m.def("run_split",
        [](const Dataset& d, const Checkpoint& c, size_t limit, const std::string& transport, double rate_bps) {
          SplitOptions o;
          o.limit = limit;
          o.transport = transport_from_name(transport);
          o.channel.data_rate_bps = rate_bps;
          o.channel.validate();
          const LatencySummary s = run_split(d, c, o).summary;
          py::dict r;
          r["accuracy"] = s.accuracy;
          r["mean_payload_bytes"] = s.mean_payload_bytes;
          r["mean_encode_s"] = s.mean_encode_s;
          r["mean_comm_s"] = s.mean_comm_s;
          r["mean_server_s"] = s.mean_server_s;
          r["mean_total_s"] = s.mean_total_s;
          r["p50_total_s"] = s.p50_total_s;
          r["p95_total_s"] = s.p95_total_s;
          return r;
        },
        py::arg("data"), py::arg("checkpoint"), py::arg("limit") = 0, py::arg("transport") = "inproc",
        py::arg("rate_bps") = kDefaultDataRateBps);
}
