#pragma once

#include "obgcs/container_io.hpp"
#include "obgcs/decoders.hpp"
#include "obgcs/errors.hpp"
#include "obgcs/generator.hpp"
#include "obgcs/harness.hpp"
#include "obgcs/linalg.hpp"
#include "obgcs/measurement.hpp"
#include "obgcs/memorizer.hpp"
#include "obgcs/random.hpp"
#include "obgcs/report.hpp"
#include "obgcs/theory.hpp"
