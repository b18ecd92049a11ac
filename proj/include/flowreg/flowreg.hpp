#pragma once

#include "flowreg/error.hpp"
#include "flowreg/evaluation.hpp"
#include "flowreg/fixtures.hpp"
#include "flowreg/flow/arap.hpp"
#include "flowreg/flow/loss.hpp"
#include "flowreg/flow/ode.hpp"
#include "flowreg/flow/train.hpp"
#include "flowreg/flow/velocity_field.hpp"
#include "flowreg/geometry.hpp"
#include "flowreg/io/json_io.hpp"
#include "flowreg/io/mesh_io.hpp"
#include "flowreg/point_ops.hpp"
#include "flowreg/registration.hpp"
#include "flowreg/spatial_index.hpp"
#include "flowreg/surface_extraction.hpp"
#include "flowreg/synthetic.hpp"
