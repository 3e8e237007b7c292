#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cpm/eval.hpp"
#include "cpm/phantom.hpp"

namespace py = pybind11;
using namespace cpm;

namespace {

Vec3 to_vec(const std::array<double, 3> &a) { return {a[0], a[1], a[2]}; }
std::array<double, 3> from_vec(const Vec3 &v) { return {v.x, v.y, v.z}; }

MatcherConfig parse_config(const std::string &config_json) {
    return config_json.empty() ? MatcherConfig{} : matcher_config_from_json(nlohmann::json::parse(config_json));
}

std::span<const float> as_span(const py::array_t<float, py::array::c_style | py::array::forcecast> &a) {
    if (a.ndim() != 1) {
        throw std::invalid_argument("expected a 1-D array");
    }
    return {a.data(), static_cast<size_t>(a.shape(0))};
}

// Arrays are indexed [z, y, x] to match the on-disk voxel order.
Volume volume_from_array(py::array_t<double, py::array::c_style | py::array::forcecast> data,
                         std::array<double, 3> spacing, std::array<double, 3> origin) {
    if (data.ndim() != 3) {
        throw std::invalid_argument("expected a 3-D array indexed [z, y, x]");
    }
    const Dims dims{data.shape(2), data.shape(1), data.shape(0)};
    WorldFrame frame;
    frame.spacing = to_vec(spacing);
    frame.origin = to_vec(origin);
    return Volume::from_raw(dims, frame, {data.data(), static_cast<size_t>(data.size())});
}

py::array_t<uint16_t> volume_to_array(const Volume &v) {
    const Dims &d = v.dims();
    py::array_t<uint16_t> out({d.z, d.y, d.x});
    std::copy(v.voxels().begin(), v.voxels().end(), out.mutable_data());
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Consistent point matching for 3D medical volumes";

    py::register_exception<VolumeError>(m, "VolumeError", PyExc_ValueError);
    py::register_exception<SearchError>(m, "SearchError", PyExc_ValueError);

    py::class_<Volume>(m, "Volume")
        .def(py::init(&volume_from_array), py::arg("data"), py::arg("spacing") = std::array<double, 3>{1, 1, 1},
             py::arg("origin") = std::array<double, 3>{0, 0, 0})
        .def_property_readonly("shape", [](const Volume &v) {
            return std::array<int64_t, 3>{v.dims().z, v.dims().y, v.dims().x};
        })
        .def_property_readonly("spacing", [](const Volume &v) { return from_vec(v.frame().spacing); })
        .def_property_readonly("origin", [](const Volume &v) { return from_vec(v.frame().origin); })
        .def_property_readonly("frame_label", [](const Volume &v) { return to_string(v.frame().label); })
        .def("to_numpy", &volume_to_array)
        .def("sample", [](const Volume &v, std::array<double, 3> p) { return v.sample_at(to_vec(p)); })
        .def("contains", [](const Volume &v, std::array<double, 3> p) { return v.contains(to_vec(p)); })
        .def("voxel_to_world", [](const Volume &v, std::array<double, 3> ijk) { return from_vec(v.voxel_to_world(to_vec(ijk))); })
        .def("world_to_voxel", [](const Volume &v, std::array<double, 3> p) { return from_vec(v.world_to_voxel(to_vec(p))); });

    m.def("load_volume", [](const std::string &path) { return load_volume(path); });
    m.def("save_volume", [](const Volume &v, const std::string &path) { save_volume(v, path); });

    m.def("descriptor_length", [](const std::string &config_json) {
        return parse_config(config_json).search.spec.total_length();
    }, py::arg("config_json") = "");
    m.def("sample_descriptor",
          [](const Volume &v, std::array<double, 3> p, double scale, const std::string &config_json) {
              const Descriptor d = sample_descriptor(v, to_vec(p), parse_config(config_json).search.spec, scale);
              py::array_t<float> out(static_cast<py::ssize_t>(d.values.size()));
              std::copy(d.values.begin(), d.values.end(), out.mutable_data());
              return out;
          },
          py::arg("volume"), py::arg("point"), py::arg("scale") = 1.0, py::arg("config_json") = "");

    m.def("cosine", [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
                       py::array_t<float, py::array::c_style | py::array::forcecast> b) {
        return cosine(as_span(a), as_span(b));
    });
    m.def("nmi", [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
                    py::array_t<float, py::array::c_style | py::array::forcecast> b) {
        return normalized_mutual_information(as_span(a), as_span(b));
    });
    m.def("combined_similarity", [](py::array_t<float, py::array::c_style | py::array::forcecast> a,
                                    py::array_t<float, py::array::c_style | py::array::forcecast> b) {
        return combined_similarity(as_span(a), as_span(b));
    });

    // Matchers return the JSON text of the match response.
    m.def("point_matching",
          [](const Volume &source, std::array<double, 3> q, const Volume &target, const std::string &config_json,
             bool trace) {
              MatchResult r;
              {
                  py::gil_scoped_release release;
                  r = point_matching(source, to_vec(q), target, parse_config(config_json).search);
              }
              return to_json(r, trace).dump();
          },
          py::arg("source"), py::arg("query"), py::arg("target"), py::arg("config_json") = "",
          py::arg("trace") = false);
    m.def("consistent_point_matching",
          [](const Volume &source, std::array<double, 3> q, const Volume &target, int variant,
             const std::string &config_json, bool trace) {
              MatcherConfig c = parse_config(config_json);
              c.consistent.variant = variant;
              MatchResult r;
              {
                  py::gil_scoped_release release;
                  r = consistent_point_matching(source, to_vec(q), target, c.search, c.consistent);
              }
              return to_json(r, trace).dump();
          },
          py::arg("source"), py::arg("query"), py::arg("target"), py::arg("variant") = 13,
          py::arg("config_json") = "", py::arg("trace") = false);

    m.def("froc",
          [](std::vector<double> distances, std::optional<std::vector<double>> thresholds) {
              const FrocCurve c = froc(distances, thresholds ? *thresholds : default_thresholds());
              return std::make_pair(c.thresholds, c.sensitivity);
          },
          py::arg("distances"), py::arg("thresholds") = py::none());

    m.def("phantom_pair",
          [](uint64_t seed, std::array<double, 3> shift, double warp_amplitude, double noise, size_t queries) {
              PhantomGeometry g;
              const PhantomModel model = PhantomModel::random(seed, phantom_extent(g));
              const Volume source = render_phantom(model, g, RenderOptions{Vec3{}, nullptr, noise, seed * 2});
              const Warp warp = Warp::random(seed * 13, warp_amplitude, 120.0);
              RenderOptions ro;
              ro.shift = to_vec(shift);
              ro.warp = warp_amplitude > 0.0 ? &warp : nullptr;
              ro.noise_sigma = noise;
              ro.noise_seed = seed * 2 + 1;
              const Volume target = render_phantom(model, g, ro);
              std::vector<std::pair<std::array<double, 3>, std::array<double, 3>>> pairs;
              for (const QueryPair &qp : sample_queries(model, source, target, ro, queries, seed + 1000)) {
                  pairs.emplace_back(from_vec(qp.query), from_vec(qp.truth));
              }
              return py::make_tuple(source, target, pairs);
          },
          py::arg("seed") = 1, py::arg("shift") = std::array<double, 3>{0, 0, 0}, py::arg("warp_amplitude") = 0.0,
          py::arg("noise") = 0.0, py::arg("queries") = 10);
}
