# Package initialization for streaming
