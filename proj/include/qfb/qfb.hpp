#pragma once

#include "qfb/error.hpp"
#include "qfb/linalg.hpp"
#include "qfb/model.hpp"
#include "qfb/liouville.hpp"
#include "qfb/rng.hpp"
#include "qfb/trajectory.hpp"
#include "qfb/collision.hpp"
