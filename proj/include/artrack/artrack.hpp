#pragma once

#include "artrack/error.hpp"
#include "artrack/kinematics.hpp"
#include "artrack/geometry.hpp"
#include "artrack/raster.hpp"
#include "artrack/nearest_neighbor.hpp"
#include "artrack/model.hpp"
#include "artrack/data_terms.hpp"
#include "artrack/collision.hpp"
#include "artrack/salient.hpp"
#include "artrack/physics.hpp"
#include "artrack/solver.hpp"
#include "artrack/procedural.hpp"
#include "artrack/io.hpp"
#include "artrack/synth.hpp"
#include "artrack/config.hpp"
