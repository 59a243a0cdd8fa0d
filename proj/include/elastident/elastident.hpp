#pragma once

#include "elastident/constitutive.hpp"
#include "elastident/error.hpp"
#include "elastident/formats.hpp"
#include "elastident/identify.hpp"
#include "elastident/initializer.hpp"
#include "elastident/linalg.hpp"
#include "elastident/material.hpp"
#include "elastident/mpm.hpp"
#include "elastident/observation.hpp"
#include "elastident/records.hpp"
#include "elastident/scene.hpp"
