# Stream and scenario fixtures
