#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "cvr/cli.hpp"
#include "cvr/errors.hpp"
#include "cvr/evaluation.hpp"
#include "cvr/gradient.hpp"
#include "cvr/relation_block.hpp"
#include "cvr/serialization.hpp"
#include "cvr/synthetic_data.hpp"
#include "cvr/trainer.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

json to_json_value(const py::handle& obj) {
    const auto dumps = py::module_::import("json").attr("dumps");
    return json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const json& j) {
    const auto loads = py::module_::import("json").attr("loads");
    return loads(j.dump());
}

cvr::Matrix to_matrix(const Array& a, const char* what) {
    if (a.ndim() != 2) throw cvr::ShapeError(std::string(what) + ": expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0));
    const auto cols = static_cast<std::size_t>(a.shape(1));
    return cvr::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

cvr::Vector to_vector(const Array& a, const char* what) {
    if (a.ndim() != 1) throw cvr::ShapeError(std::string(what) + ": expected a 1-D array");
    return cvr::Vector(std::vector<double>(a.data(), a.data() + a.shape(0)));
}

Array from_rows(const std::vector<cvr::Vector>& rows, std::size_t cols) {
    Array out({rows.size(), cols});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = rows[i][j];
    }
    return out;
}

std::vector<cvr::RoiCandidate> to_candidates(const Array& features, const Array& boxes, cvr::View view) {
    if (features.ndim() != 2 || boxes.ndim() != 2 || boxes.shape(1) != 4 ||
        features.shape(0) != boxes.shape(0)) {
        throw cvr::ShapeError("expected features (n, d_f) and boxes (n, 4) with matching n");
    }
    std::vector<cvr::RoiCandidate> out;
    const auto f = features.unchecked<2>();
    const auto b = boxes.unchecked<2>();
    for (py::ssize_t i = 0; i < features.shape(0); ++i) {
        cvr::RoiCandidate c;
        c.view = view;
        c.geometry = {b(i, 0), b(i, 1), b(i, 2), b(i, 3)};
        cvr::validate_geometry(c.geometry);
        c.feature = cvr::Vector(static_cast<std::size_t>(features.shape(1)));
        for (py::ssize_t j = 0; j < features.shape(1); ++j) c.feature[j] = f(i, j);
        out.push_back(std::move(c));
    }
    return out;
}

cvr::RelationBlockParams to_block(const Array& query, const Array& key, const Array& value,
                                  const Array& gate) {
    cvr::RelationBlockParams p{to_matrix(query, "query"), to_matrix(key, "key"),
                               to_matrix(value, "value"), to_vector(gate, "gate")};
    p.validate();
    return p;
}

cvr::RoiGeometry to_box(const std::vector<double>& b) {
    if (b.size() != 4) throw cvr::ShapeError("box must be [x, y, w, h]");
    return {b[0], b[1], b[2], b[3]};
}

// Python-side dataset handle; keeps samples in C++ form.
struct Dataset {
    std::vector<cvr::PairedSample> samples;
};

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Cross-view relation network core (C++)";

    auto base = py::register_exception<cvr::Error>(m, "CvrError", PyExc_RuntimeError);
    py::register_exception<cvr::ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<cvr::ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<cvr::DomainError>(m, "DomainError", base.ptr());
    py::register_exception<cvr::SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<cvr::IoError>(m, "IoError", base.ptr());
    py::register_exception<cvr::NumericalError>(m, "NumericalError", base.ptr());

    m.def(
        "iou",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            return cvr::iou(to_box(a), to_box(b));
        },
        py::arg("a"), py::arg("b"), "IoU of two center-format boxes [x, y, w, h].");

    m.def(
        "geometric_normalize",
        [](const std::vector<double>& a, const std::vector<double>& b, double eps) {
            return cvr::geometric_normalize(to_box(a), to_box(b), eps).values();
        },
        py::arg("a"), py::arg("b"), py::arg("eps") = 1e-3);

    m.def(
        "embed_geometry",
        [](const std::vector<double>& g, std::size_t d_emb, double wavelength) {
            return cvr::embed_geometry(g, d_emb, wavelength).values();
        },
        py::arg("g"), py::arg("d_emb"), py::arg("wavelength") = 1000.0);

    m.def(
        "relation_block_forward",
        [](const Array& target_features, const Array& target_boxes, const Array& source_features,
           const Array& source_boxes, const Array& query, const Array& key, const Array& value,
           const Array& gate) {
            const auto targets = to_candidates(target_features, target_boxes, cvr::View::kView1);
            const auto sources = to_candidates(source_features, source_boxes, cvr::View::kView2);
            const auto params = to_block(query, key, value, gate);
            const auto out = cvr::relation_block_forward(targets, sources, params);
            return from_rows(out, params.feature_dim());
        },
        py::arg("target_features"), py::arg("target_boxes"), py::arg("source_features"),
        py::arg("source_boxes"), py::arg("query"), py::arg("key"), py::arg("value"), py::arg("gate"),
        "Refined target features f + f' for one relation block (targets in one view, sources in the other).");

    py::class_<Dataset>(m, "Dataset")
        .def("__len__", [](const Dataset& d) { return d.samples.size(); })
        .def_property_readonly("feature_dim",
                               [](const Dataset& d) {
                                   return d.samples.empty() ? std::size_t{0}
                                                            : d.samples.front().feature_dim();
                               })
        .def("save", [](const Dataset& d, const std::string& path) { cvr::write_dataset(d.samples, path); },
             py::arg("path"))
        .def(
            "split",
            [](const Dataset& d, double test_fraction) {
                auto s = cvr::split_dataset(d.samples, test_fraction);
                return py::make_tuple(Dataset{std::move(s.train)}, Dataset{std::move(s.test)});
            },
            py::arg("test_fraction"));

    m.def(
        "generate_dataset",
        [](const py::dict& config) {
            return Dataset{cvr::generate_dataset(cvr::generator_config_from_json(to_json_value(config)))};
        },
        py::arg("config"), "Synthetic paired-view dataset; config needs at least seed and n_cases.");

    m.def(
        "load_dataset", [](const std::string& path) { return Dataset{cvr::read_dataset(path)}; },
        py::arg("path"));

    py::class_<cvr::Checkpoint>(m, "Checkpoint")
        .def_readonly("epoch", &cvr::Checkpoint::epoch)
        .def_readonly("loss_history", &cvr::Checkpoint::train_loss_history)
        .def_property_readonly("config", [](const cvr::Checkpoint& c) { return to_py(cvr::to_json(c.config)); })
        .def_property_readonly("n_blocks", [](const cvr::Checkpoint& c) { return c.model.dims().n_blocks; })
        .def("save", [](const cvr::Checkpoint& c, const std::string& path) { cvr::write_checkpoint(c, path); },
             py::arg("path"))
        .def("__eq__", [](const cvr::Checkpoint& a, const cvr::Checkpoint& b) { return a == b; });

    m.def(
        "train",
        [](const Dataset& data, const py::dict& config) {
            const auto cfg = cvr::train_config_from_json(to_json_value(config));
            py::gil_scoped_release release;
            return cvr::train(data.samples, cfg);
        },
        py::arg("dataset"), py::arg("config") = py::dict(), "Trains a model; unspecified fields keep their defaults.");

    m.def(
        "load_checkpoint", [](const std::string& path) { return cvr::read_checkpoint(path); }, py::arg("path"));

    m.def(
        "evaluate",
        [](const cvr::Checkpoint& ckpt, const Dataset& data, const py::dict& config) {
            const auto cfg = cvr::eval_config_from_json(to_json_value(config));
            return to_py(cvr::to_json(cvr::evaluate(ckpt.model, data.samples, cfg)));
        },
        py::arg("checkpoint"), py::arg("dataset"), py::arg("config") = py::dict(),
        "Precision, recall, F1, FPI and the FROC curve as a dict.");

    m.def(
        "gradcheck",
        [](std::uint64_t seed, std::size_t d_f, std::size_t d_k, std::size_t d_emb, std::size_t candidates,
           std::size_t n_blocks, double step, double tolerance) {
            const auto toy = cvr::make_toy_problem(seed, {d_f, d_k, d_emb, candidates, n_blocks});
            return to_py(cvr::to_json(
                cvr::finite_difference_check(toy.sample, toy.model, cvr::LossWeights{}, step, tolerance)));
        },
        py::arg("seed") = 1, py::arg("d_f") = 8, py::arg("d_k") = 4, py::arg("d_emb") = 8,
        py::arg("candidates") = 3, py::arg("n_blocks") = 2, py::arg("step") = 1e-5,
        py::arg("tolerance") = 1e-4);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"cvrnet"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out;
            std::ostringstream err;
            const int code = cvr::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a cvrnet subcommand in-process; returns (exit_code, stdout, stderr).");
}
